#include "lkreg/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lkreg/config.hpp"
#include "lkreg/tensor_io.hpp"

namespace fs = std::filesystem;

namespace lkreg {

namespace {

std::string param_filename(std::size_t index, const std::string& name) {
  std::string safe = name;
  for (char& c : safe)
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%04zu_", index);
  return std::string(buf) + safe + ".tns";
}

}  // namespace

void save_checkpoint(const std::string& dir, const Network<float>& net) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw data_error("checkpoint: cannot create directory " + dir);

  {
    std::ofstream cfg(dir + "/net.cfg", std::ios::trunc);
    if (!cfg) throw data_error("checkpoint: cannot write net.cfg in " + dir);
    cfg << net.config().to_kv_text();
  }
  std::ofstream manifest(dir + "/manifest.txt", std::ios::trunc);
  if (!manifest)
    throw data_error("checkpoint: cannot write manifest in " + dir);
  const auto& params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string file = param_filename(i, params[i].name);
    write_tns(dir + "/" + file, params[i].var->value);
    manifest << params[i].name << " " << file << "\n";
  }
}

Network<float> load_checkpoint(const std::string& dir) {
  if (!fs::exists(dir + "/net.cfg") || !fs::exists(dir + "/manifest.txt"))
    throw data_error("checkpoint: " + dir + " is missing net.cfg/manifest.txt");
  const NetConfig cfg = NetConfig::from_kv(parse_kv_file(dir + "/net.cfg"));
  Rng rng(0);  // values are overwritten below
  Network<float> net(cfg, rng);

  std::ifstream manifest(dir + "/manifest.txt");
  std::string line;
  std::size_t loaded = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, file;
    if (!(ls >> name >> file))
      throw data_error("checkpoint: bad manifest line '" + line + "'");
    Var<float> p = net.parameter(name);
    TensorF t = read_tns<float>(dir + "/" + file);
    if (t.shape != p->value.shape)
      throw data_error("checkpoint: parameter '" + name + "' has shape " +
                       shape_string(t.shape) + ", network expects " +
                       shape_string(p->value.shape));
    p->value = std::move(t);
    ++loaded;
  }
  if (loaded != net.parameters().size())
    throw data_error("checkpoint: manifest lists " + std::to_string(loaded) +
                     " parameters, network has " +
                     std::to_string(net.parameters().size()));
  return net;
}

}  // namespace lkreg
