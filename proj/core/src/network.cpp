#include "lkreg/network.hpp"

#include <algorithm>
#include <sstream>

#include "lkreg/ops.hpp"
#include "lkreg/warp.hpp"

namespace lkreg {

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("config: bad boolean '" + v + "' for key " + key);
}

index_t parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw config_error("config: bad integer '" + v + "' for key " + key);
  }
}

}  // namespace

NetConfig NetConfig::vanilla(int dims, index_t C, index_t k) {
  NetConfig c;
  c.dims = dims;
  c.channels = C;
  c.k = k;
  c.variant = Variant::vanilla_unet;
  c.validate();
  return c;
}

NetConfig NetConfig::lku(int dims, index_t C, index_t k) {
  NetConfig c;
  c.dims = dims;
  c.channels = C;
  c.k = k;
  c.variant = Variant::lku_net;
  c.validate();
  return c;
}

void NetConfig::validate() const {
  if (dims != 2 && dims != 3)
    throw config_error("net config: dims must be 2 or 3");
  if (channels < 1) throw config_error("net config: C must be positive");
  if (k < 3 || k % 2 == 0)
    throw config_error("net config: k must be odd and >= 3, got " +
                       std::to_string(k));
  if (levels != 5)
    throw config_error(
        "net config: only the calibrated 5-level schedule is supported");
  if (lk_block_count < 0 || lk_block_count > 4)
    throw config_error("net config: lk_block_count must be in 0..4");
  if (squaring_steps < 0)
    throw config_error("net config: squaring_steps must be >= 0");
  if (variant == Variant::lku_net && lk_block_count > 0) {
    const bool large_eff = branches.large && k > 3;
    if (!large_eff && !branches.three && !branches.one && !branches.identity)
      throw config_error("net config: LK block needs at least one branch");
  }
}

std::string NetConfig::to_kv_text() const {
  std::ostringstream os;
  os << "variant="
     << (variant == Variant::lku_net ? "lku_net" : "vanilla_unet") << "\n";
  os << "dims=" << dims << "\n";
  os << "C=" << channels << "\n";
  os << "k=" << k << "\n";
  os << "large=" << bool_str(branches.large) << "\n";
  os << "three_by_three=" << bool_str(branches.three) << "\n";
  os << "one_by_one=" << bool_str(branches.one) << "\n";
  os << "identity=" << bool_str(branches.identity) << "\n";
  os << "diffeomorphic=" << bool_str(diffeomorphic) << "\n";
  os << "squaring_steps=" << squaring_steps << "\n";
  os << "levels=" << levels << "\n";
  os << "lk_blocks=" << lk_block_count << "\n";
  return os.str();
}

NetConfig NetConfig::from_kv(const std::map<std::string, std::string>& kv) {
  NetConfig c;
  auto it = kv.find("variant");
  if (it != kv.end()) {
    if (it->second == "lku_net")
      c.variant = Variant::lku_net;
    else if (it->second == "vanilla_unet")
      c.variant = Variant::vanilla_unet;
    else
      throw config_error("net config: unknown variant '" + it->second + "'");
  }
  if ((it = kv.find("dims")) != kv.end())
    c.dims = static_cast<int>(parse_int(it->second, "dims"));
  if ((it = kv.find("C")) != kv.end()) c.channels = parse_int(it->second, "C");
  if ((it = kv.find("k")) != kv.end())
    c.k = parse_int(it->second, "k");
  else
    c.k = c.variant == Variant::lku_net ? 5 : 3;
  if ((it = kv.find("large")) != kv.end())
    c.branches.large = parse_bool(it->second, "large");
  if ((it = kv.find("three_by_three")) != kv.end())
    c.branches.three = parse_bool(it->second, "three_by_three");
  if ((it = kv.find("one_by_one")) != kv.end())
    c.branches.one = parse_bool(it->second, "one_by_one");
  if ((it = kv.find("identity")) != kv.end())
    c.branches.identity = parse_bool(it->second, "identity");
  if ((it = kv.find("diffeomorphic")) != kv.end())
    c.diffeomorphic = parse_bool(it->second, "diffeomorphic");
  if ((it = kv.find("squaring_steps")) != kv.end())
    c.squaring_steps =
        static_cast<int>(parse_int(it->second, "squaring_steps"));
  if ((it = kv.find("levels")) != kv.end())
    c.levels = static_cast<int>(parse_int(it->second, "levels"));
  if ((it = kv.find("lk_blocks")) != kv.end())
    c.lk_block_count = static_cast<int>(parse_int(it->second, "lk_blocks"));
  c.validate();
  return c;
}

std::uint64_t NetConfig::hash() const {
  const std::string text = to_kv_text();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

void LKBlockConfig::validate() const {
  if (dims < 1 || dims > 3)
    throw config_error("lk block: dims must be 1..3");
  if (in_channels < 1 || out_channels < 1)
    throw config_error("lk block: channel counts must be positive");
  if (k < 3 || k % 2 == 0)
    throw config_error("lk block: k must be odd and >= 3");
  if (!has_large() && !branches.three && !branches.one && !branches.identity)
    throw config_error("lk block: at least one branch must be enabled");
  if (branches.identity && in_channels != out_channels)
    throw config_error(
        "lk block: identity branch requires in_channels == out_channels");
}

std::vector<LayerPlan> plan_layers(const NetConfig& cfg) {
  cfg.validate();
  const index_t C = cfg.channels;
  const bool lku = cfg.variant == Variant::lku_net;
  const index_t kc = lku ? 3 : cfg.k;  // plain conv kernel
  // LK positions, deepest first, among the channel-preserving encoder convs
  // of levels 2..5.
  const bool lk_at[4] = {
      lku && cfg.lk_block_count >= 4,  // ec3 (level 2)
      lku && cfg.lk_block_count >= 3,  // ec5 (level 3)
      lku && cfg.lk_block_count >= 2,  // ec7 (level 4)
      lku && cfg.lk_block_count >= 1,  // ec9 (level 5)
  };

  std::vector<LayerPlan> plan;
  auto conv = [&](std::string name, index_t cin, index_t cout, index_t kernel,
                  index_t stride, index_t scale) {
    LayerPlan l;
    l.name = std::move(name);
    l.kind = LayerKind::conv;
    l.cin = cin;
    l.cout = cout;
    l.kernel = kernel;
    l.stride = stride;
    l.scale = scale;
    plan.push_back(l);
  };
  auto lk = [&](std::string name, index_t ch, index_t scale) {
    LayerPlan l;
    l.name = std::move(name);
    l.kind = LayerKind::lk_block;
    l.cin = ch;
    l.cout = ch;
    l.kernel = cfg.k;
    l.scale = scale;
    l.branches = cfg.branches;
    plan.push_back(l);
  };
  auto enc2 = [&](std::string name, index_t ch, index_t scale, bool use_lk) {
    if (use_lk)
      lk(std::move(name), ch, scale);
    else
      conv(std::move(name), ch, ch, kc, 1, scale);
  };
  auto up = [&](std::string name, index_t ch, index_t scale) {
    LayerPlan l;
    l.name = std::move(name);
    l.kind = LayerKind::tconv;
    l.cin = ch;
    l.cout = ch;
    l.kernel = 2;
    l.stride = 2;
    l.scale = scale;
    plan.push_back(l);
  };

  conv("eninput", 2, C, kc, 1, 1);
  conv("ec1", C, C, kc, 1, 1);
  plan.back().save_skip = true;  // e0
  conv("ec2", C, 2 * C, kc, 2, 2);
  enc2("ec3", 2 * C, 2, lk_at[0]);
  plan.back().save_skip = true;  // e1
  conv("ec4", 2 * C, 4 * C, kc, 2, 4);
  enc2("ec5", 4 * C, 4, lk_at[1]);
  plan.back().save_skip = true;  // e2
  conv("ec6", 4 * C, 8 * C, kc, 2, 8);
  enc2("ec7", 8 * C, 8, lk_at[2]);
  plan.back().save_skip = true;  // e3
  if (lku) {
    conv("ec8", 8 * C, 8 * C, kc, 2, 16);
    enc2("ec9", 8 * C, 16, lk_at[3]);
  } else {
    conv("ec8", 8 * C, 16 * C, kc, 2, 16);
    conv("ec9", 16 * C, 8 * C, kc, 1, 16);
  }

  up("up1", 8 * C, 8);
  conv("dc1", 16 * C, 8 * C, kc, 1, 8);
  plan.back().concat_skip = 3;
  conv("dc2", 8 * C, 4 * C, kc, 1, 8);
  up("up2", 4 * C, 4);
  conv("dc3", 8 * C, 4 * C, kc, 1, 4);
  plan.back().concat_skip = 2;
  conv("dc4", 4 * C, 2 * C, kc, 1, 4);
  up("up3", 2 * C, 2);
  conv("dc5", 4 * C, 4 * C, kc, 1, 2);
  plan.back().concat_skip = 1;
  conv("dc6", 4 * C, 2 * C, kc, 1, 2);
  up("up4", 2 * C, 1);
  conv("dc7", 3 * C, 2 * C, kc, 1, 1);
  plan.back().concat_skip = 0;
  conv("dc8", 2 * C, 2 * C, kc, 1, 1);

  LayerPlan head;
  head.name = "dc9";
  head.kind = LayerKind::head;
  head.cin = 2 * C;
  head.cout = cfg.dims;
  head.kernel = kc;
  head.stride = 1;
  head.scale = 1;
  head.bias = false;
  head.prelu = false;
  plan.push_back(head);
  return plan;
}

namespace {

template <class T>
Tensor<T> init_uniform(Rng& rng, std::vector<index_t> shape, double bound) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data)
    v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

ConvSpec plan_conv_spec(const LayerPlan& l, int dims, index_t kernel,
                        bool bias) {
  ConvSpec s;
  s.dims = dims;
  s.in_channels = l.cin;
  s.out_channels = l.cout;
  for (int i = 0; i < dims; ++i) {
    const auto u = static_cast<std::size_t>(i);
    s.kernel[u] = kernel;
    s.stride[u] = l.stride;
    s.pad[u] = (kernel - 1) / 2;
  }
  s.has_bias = bias;
  s.validate();
  return s;
}

index_t ipow(index_t base, int e) {
  index_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

template <class T>
Var<T> lk_block_forward(Graph<T>* g, const Var<T>& x,
                        const LKBlockConfig& block, const LKWeights<T>& w) {
  block.validate();
  auto check = [](bool enabled, const Var<T>& wv, const Var<T>& bv,
                  const char* which) {
    if (enabled) {
      if (!wv) throw config_error(std::string("lk block: missing ") + which +
                                  " branch weights");
    } else if (wv || bv) {
      throw config_error(std::string("lk block: ") + which +
                         " branch is disabled but weights were supplied");
    }
  };
  check(block.has_large(), w.large_w, w.large_b, "large");
  check(block.branches.three, w.three_w, w.three_b, "3-kernel");
  check(block.branches.one, w.one_w, w.one_b, "1-kernel");

  Var<T> acc;
  auto add_branch = [&](const Var<T>& term) {
    acc = acc ? add(g, acc, term) : term;
  };
  if (block.has_large())
    add_branch(conv(g, x, w.large_w, w.large_b,
                    ConvSpec::same(block.dims, block.in_channels,
                                   block.out_channels, block.k,
                                   w.large_b != nullptr)));
  if (block.branches.three)
    add_branch(conv(g, x, w.three_w, w.three_b,
                    ConvSpec::same(block.dims, block.in_channels,
                                   block.out_channels, 3,
                                   w.three_b != nullptr)));
  if (block.branches.one)
    add_branch(conv(g, x, w.one_w, w.one_b,
                    ConvSpec::same(block.dims, block.in_channels,
                                   block.out_channels, 1,
                                   w.one_b != nullptr)));
  if (block.branches.identity) add_branch(x);
  return acc;
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> fuse_lk_block(const LKBlockConfig& block,
                                              const LKWeights<T>& w) {
  block.validate();
  const int D = block.dims;
  const index_t k = block.k;
  const index_t kvol = ipow(k, D);
  std::vector<index_t> wshape{block.out_channels, block.in_channels};
  for (int i = 0; i < D; ++i) wshape.push_back(k);
  Tensor<T> fused(wshape);
  Tensor<T> bias(std::vector<index_t>{block.out_channels});

  // Embeds a centered s-kernel (s <= k, both odd) into the k-kernel.
  auto embed = [&](const Tensor<T>& src, index_t s) {
    const index_t off = (k - s) / 2;
    const index_t svol = ipow(s, D);
    for (index_t co = 0; co < block.out_channels; ++co)
      for (index_t ci = 0; ci < block.in_channels; ++ci)
        for (index_t t = 0; t < svol; ++t) {
          index_t rem = t, dst = 0;
          // decode src tap, re-encode into the k-kernel
          index_t coords[3] = {0, 0, 0};
          for (int d = D - 1; d >= 0; --d) {
            coords[d] = rem % s;
            rem /= s;
          }
          for (int d = 0; d < D; ++d) dst = dst * k + (coords[d] + off);
          fused.data[static_cast<std::size_t>((co * block.in_channels + ci) *
                                                  kvol +
                                              dst)] +=
              src.data[static_cast<std::size_t>((co * block.in_channels + ci) *
                                                    svol +
                                                t)];
        }
  };
  auto add_bias = [&](const Var<T>& b) {
    if (!b) return;
    for (index_t co = 0; co < block.out_channels; ++co)
      bias.data[static_cast<std::size_t>(co)] +=
          b->value.data[static_cast<std::size_t>(co)];
  };

  if (block.has_large()) {
    embed(w.large_w->value, k);
    add_bias(w.large_b);
  }
  if (block.branches.three) {
    embed(w.three_w->value, 3);
    add_bias(w.three_b);
  }
  if (block.branches.one) {
    embed(w.one_w->value, 1);
    add_bias(w.one_b);
  }
  if (block.branches.identity) {
    index_t center = 0;
    for (int d = 0; d < D; ++d) center = center * k + (k - 1) / 2;
    for (index_t c = 0; c < block.out_channels; ++c)
      fused.data[static_cast<std::size_t>((c * block.in_channels + c) * kvol +
                                          center)] += T(1);
  }
  return {std::move(fused), std::move(bias)};
}

template <class T>
Network<T>::Network(NetConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  plan_ = plan_layers(cfg_);
  const int D = cfg_.dims;

  auto push = [&](const std::string& name, Tensor<T> t) {
    params_.push_back(Param<T>{name, make_leaf(std::move(t), true, name)});
    return static_cast<int>(params_.size() - 1);
  };
  auto conv_init = [&](const std::string& base, index_t cin, index_t cout,
                       index_t kernel, double bound_override, bool bias,
                       int& wi, int& bi) {
    std::vector<index_t> ws{cout, cin};
    for (int i = 0; i < D; ++i) ws.push_back(kernel);
    const double fan_in = static_cast<double>(cin * ipow(kernel, D));
    const double bound =
        bound_override > 0 ? bound_override : 1.0 / std::sqrt(fan_in);
    wi = push(base + ".weight", init_uniform<T>(rng, ws, bound));
    if (bias)
      bi = push(base + ".bias",
                init_uniform<T>(rng, {cout}, bound));
  };

  slots_.resize(plan_.size());
  for (std::size_t li = 0; li < plan_.size(); ++li) {
    const LayerPlan& l = plan_[li];
    Slot& s = slots_[li];
    switch (l.kind) {
      case LayerKind::conv:
        conv_init(l.name, l.cin, l.cout, l.kernel, 0.0, l.bias, s.w, s.b);
        break;
      case LayerKind::head:
        // near-identity start: the field head opens at ~zero output
        conv_init(l.name, l.cin, l.cout, l.kernel, 1e-3, l.bias, s.w, s.b);
        break;
      case LayerKind::lk_block: {
        LKBlockConfig blk;
        blk.in_channels = l.cin;
        blk.out_channels = l.cout;
        blk.k = l.kernel;
        blk.dims = D;
        blk.branches = l.branches;
        blk.validate();
        if (blk.has_large())
          conv_init(l.name + ".large", l.cin, l.cout, l.kernel, 0.0, true,
                    s.large_w, s.large_b);
        if (blk.branches.three)
          conv_init(l.name + ".k3", l.cin, l.cout, 3, 0.0, true, s.w, s.b);
        if (blk.branches.one)
          conv_init(l.name + ".k1", l.cin, l.cout, 1, 0.0, true, s.one_w,
                    s.one_b);
        break;
      }
      case LayerKind::tconv: {
        std::vector<index_t> ws{l.cin, l.cout};
        for (int i = 0; i < D; ++i) ws.push_back(2);
        const double bound = 1.0 / std::sqrt(static_cast<double>(
                                 l.cin * ipow(2, D)));
        s.w = push(l.name + ".weight", init_uniform<T>(rng, ws, bound));
        s.b = push(l.name + ".bias", init_uniform<T>(rng, {l.cout}, bound));
        break;
      }
    }
    if (l.prelu)
      s.alpha = push(l.name + ".alpha", Tensor<T>::full({1}, T(0.25)));
  }
}

template <class T>
Var<T> Network<T>::parameter(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.var;
  throw usage_error("network: no parameter named '" + name + "'");
}

template <class T>
index_t Network<T>::parameter_count() const {
  index_t n = 0;
  for (const auto& p : params_) n += p.var->value.numel();
  return n;
}

template <class T>
void Network<T>::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

template <class T>
Var<T> Network<T>::forward(Graph<T>* g, const Var<T>& input) const {
  if (!input) throw usage_error("network: null input");
  const auto& shape = input->value.shape;
  if (static_cast<int>(shape.size()) != cfg_.dims + 2 || shape[1] != 2)
    throw config_error("network: input must be [B, 2, spatial], got " +
                       shape_string(shape));
  const index_t div = cfg_.spatial_divisor();
  for (int i = 0; i < cfg_.dims; ++i) {
    const index_t e = shape[static_cast<std::size_t>(i) + 2];
    if (e < div || e % div != 0)
      throw config_error("network: spatial extents must be multiples of " +
                         std::to_string(div) + ", got " + shape_string(shape));
  }

  Var<T> x = input;
  std::vector<Var<T>> skips;
  for (std::size_t li = 0; li < plan_.size(); ++li) {
    const LayerPlan& l = plan_[li];
    const Slot& s = slots_[li];
    if (l.concat_skip >= 0)
      x = concat(g, 1, x, skips[static_cast<std::size_t>(l.concat_skip)]);
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::head: {
        const ConvSpec spec = plan_conv_spec(l, cfg_.dims, l.kernel, l.bias);
        x = conv(g, x, params_[static_cast<std::size_t>(s.w)].var,
                 l.bias ? params_[static_cast<std::size_t>(s.b)].var
                        : Var<T>(),
                 spec);
        break;
      }
      case LayerKind::lk_block: {
        LKBlockConfig blk;
        blk.in_channels = l.cin;
        blk.out_channels = l.cout;
        blk.k = l.kernel;
        blk.dims = cfg_.dims;
        blk.branches = l.branches;
        LKWeights<T> w;
        if (s.large_w >= 0) {
          w.large_w = params_[static_cast<std::size_t>(s.large_w)].var;
          w.large_b = params_[static_cast<std::size_t>(s.large_b)].var;
        }
        if (s.w >= 0) {
          w.three_w = params_[static_cast<std::size_t>(s.w)].var;
          w.three_b = params_[static_cast<std::size_t>(s.b)].var;
        }
        if (s.one_w >= 0) {
          w.one_w = params_[static_cast<std::size_t>(s.one_w)].var;
          w.one_b = params_[static_cast<std::size_t>(s.one_b)].var;
        }
        x = lk_block_forward(g, x, blk, w);
        break;
      }
      case LayerKind::tconv: {
        TConvSpec spec = TConvSpec::up2(cfg_.dims, l.cin, l.cout, l.bias);
        x = transposed_conv(g, x, params_[static_cast<std::size_t>(s.w)].var,
                            params_[static_cast<std::size_t>(s.b)].var, spec);
        break;
      }
    }
    if (l.prelu)
      x = prelu(g, x, params_[static_cast<std::size_t>(s.alpha)].var);
    if (l.save_skip) skips.push_back(x);
  }
  return x;
}

template <class T>
Var<T> Network<T>::displacement(Graph<T>* g, const Var<T>& input) const {
  Var<T> out = forward(g, input);
  if (cfg_.diffeomorphic) out = exp_velocity(g, out, cfg_.squaring_steps);
  return out;
}

template <class T>
Network<T> Network<T>::fused() const {
  Network<T> f;
  f.cfg_ = cfg_;
  f.plan_ = plan_;
  f.slots_.resize(plan_.size());
  for (std::size_t li = 0; li < plan_.size(); ++li) {
    const LayerPlan& l = plan_[li];
    const Slot& s = slots_[li];
    Slot& fs = f.slots_[li];
    auto copy_param = [&](int idx) {
      if (idx < 0) return -1;
      const auto& p = params_[static_cast<std::size_t>(idx)];
      f.params_.push_back(Param<T>{p.name, make_leaf(p.var->value, true, p.name)});
      return static_cast<int>(f.params_.size() - 1);
    };
    if (l.kind == LayerKind::lk_block) {
      LKBlockConfig blk;
      blk.in_channels = l.cin;
      blk.out_channels = l.cout;
      blk.k = l.kernel;
      blk.dims = cfg_.dims;
      blk.branches = l.branches;
      LKWeights<T> w;
      if (s.large_w >= 0) {
        w.large_w = params_[static_cast<std::size_t>(s.large_w)].var;
        w.large_b = params_[static_cast<std::size_t>(s.large_b)].var;
      }
      if (s.w >= 0) {
        w.three_w = params_[static_cast<std::size_t>(s.w)].var;
        w.three_b = params_[static_cast<std::size_t>(s.b)].var;
      }
      if (s.one_w >= 0) {
        w.one_w = params_[static_cast<std::size_t>(s.one_w)].var;
        w.one_b = params_[static_cast<std::size_t>(s.one_b)].var;
      }
      auto [fw, fb] = fuse_lk_block(blk, w);
      LayerPlan& fl = f.plan_[li];
      fl.kind = LayerKind::conv;
      fl.kernel = l.kernel;
      fl.bias = true;
      f.params_.push_back(
          Param<T>{l.name + ".weight", make_leaf(std::move(fw), true)});
      fs.w = static_cast<int>(f.params_.size() - 1);
      f.params_.push_back(
          Param<T>{l.name + ".bias", make_leaf(std::move(fb), true)});
      fs.b = static_cast<int>(f.params_.size() - 1);
    } else {
      fs.w = copy_param(s.w);
      fs.b = copy_param(s.b);
      fs.large_w = copy_param(s.large_w);
      fs.large_b = copy_param(s.large_b);
      fs.one_w = copy_param(s.one_w);
      fs.one_b = copy_param(s.one_b);
    }
    fs.alpha = copy_param(s.alpha);
  }
  return f;
}

#define LKREG_INSTANTIATE_NET(T)                                              \
  template Var<T> lk_block_forward(Graph<T>*, const Var<T>&,                  \
                                   const LKBlockConfig&, const LKWeights<T>&);\
  template std::pair<Tensor<T>, Tensor<T>> fuse_lk_block(                     \
      const LKBlockConfig&, const LKWeights<T>&);                             \
  template class Network<T>;

LKREG_INSTANTIATE_NET(float)
LKREG_INSTANTIATE_NET(double)
#undef LKREG_INSTANTIATE_NET

}  // namespace lkreg
