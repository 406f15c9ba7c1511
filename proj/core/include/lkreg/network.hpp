#pragma once

#include <map>

#include "lkreg/conv.hpp"
#include "lkreg/rng.hpp"

namespace lkreg {

// Declarative construction of the vanilla U-Net and LKU-Net encoder-decoder
// pair. Both variants share one five-level layer schedule; the layer plan
// below is the single source of truth for the builder and the complexity
// analyzer.
//
// Schedule notes, pinned by the published parameter counts:
//  - every conv and transposed conv carries a bias and a one-parameter
//    PReLU, except the bias-free, activation-free head;
//  - the vanilla variant widens its deepest downsample to 16C and returns
//    to 8C; the LKU variant keeps the deepest level at 8C so that all four
//    LK blocks (second conv of levels 2..5) preserve channels and can carry
//    the identity branch.

enum class Variant { vanilla_unet, lku_net };

struct BranchToggles {
  bool large = true;     // k-kernel branch (merged into 3x3 when k == 3)
  bool three = true;     // 3-kernel branch
  bool one = true;       // 1-kernel branch
  bool identity = true;  // identity shortcut, needs in_channels == out_channels
};

struct NetConfig {
  int dims = 3;
  index_t channels = 4;  // kernel count of the first layer (C)
  index_t k = 5;         // LK kernel (lku_net) or global conv kernel (vanilla)
  Variant variant = Variant::lku_net;
  bool diffeomorphic = false;
  int squaring_steps = 7;
  int levels = 5;
  int lk_block_count = 4;
  BranchToggles branches;

  static NetConfig vanilla(int dims, index_t C, index_t k = 3);
  static NetConfig lku(int dims, index_t C, index_t k = 5);

  void validate() const;
  // Spatial extents must be divisible by this (and at least this large).
  index_t spatial_divisor() const { return index_t(1) << (levels - 1); }

  std::string to_kv_text() const;
  static NetConfig from_kv(const std::map<std::string, std::string>& kv);
  std::uint64_t hash() const;
};

struct LKBlockConfig {
  index_t in_channels = 1;
  index_t out_channels = 1;
  index_t k = 5;
  int dims = 2;
  BranchToggles branches;

  // True when the k-kernel branch exists as its own conv.
  bool has_large() const { return branches.large && k > 3; }
  void validate() const;
};

enum class LayerKind { conv, lk_block, tconv, head };

struct LayerPlan {
  std::string name;
  LayerKind kind = LayerKind::conv;
  index_t cin = 0;
  index_t cout = 0;
  index_t kernel = 3;  // for lk_block: the large-kernel extent
  index_t stride = 1;
  index_t scale = 1;  // output spatial divisor w.r.t. the network input
  bool bias = true;
  bool prelu = true;
  int concat_skip = -1;   // skip-buffer index concatenated before this layer
  bool save_skip = false; // push output onto the skip list
  BranchToggles branches; // lk_block only
};

std::vector<LayerPlan> plan_layers(const NetConfig& cfg);

// ---- LK block ----

template <class T>
struct LKWeights {
  Var<T> large_w, large_b;
  Var<T> three_w, three_b;
  Var<T> one_w, one_b;
};

// Pre-activation branch sum: conv_k(x) + conv_3(x) + conv_1(x) + x over the
// enabled branches; all branches stride 1, same padding.
template <class T>
Var<T> lk_block_forward(Graph<T>* g, const Var<T>& x,
                        const LKBlockConfig& block, const LKWeights<T>& w);

// Exact single-conv reparameterization of the branch sum: smaller kernels
// are zero-embedded at the center of the k-kernel, the identity becomes a
// center spike, biases add. Returns {weight [Cout,Cin,k...], bias [Cout]}.
template <class T>
std::pair<Tensor<T>, Tensor<T>> fuse_lk_block(const LKBlockConfig& block,
                                              const LKWeights<T>& w);

// ---- network ----

template <class T>
struct Param {
  std::string name;
  Var<T> var;
};

template <class T>
class Network {
 public:
  Network(NetConfig cfg, Rng& rng);

  const NetConfig& config() const { return cfg_; }
  const std::vector<LayerPlan>& plan() const { return plan_; }
  std::vector<Param<T>>& parameters() { return params_; }
  const std::vector<Param<T>>& parameters() const { return params_; }
  Var<T> parameter(const std::string& name) const;
  index_t parameter_count() const;  // total scalar parameters
  void zero_grad();

  // [1, 2, spatial] stacked fixed+moving -> [1, dims, spatial] field
  // (displacement, or velocity when diffeomorphic).
  Var<T> forward(Graph<T>* g, const Var<T>& input) const;

  // forward plus Exp() when the config is diffeomorphic.
  Var<T> displacement(Graph<T>* g, const Var<T>& input) const;

  // Inference-time network with every LK block folded into one conv.
  Network<T> fused() const;

 private:
  Network() = default;
  struct Slot {
    int w = -1, b = -1, alpha = -1;
    int large_w = -1, large_b = -1, one_w = -1, one_b = -1;
  };
  NetConfig cfg_;
  std::vector<LayerPlan> plan_;
  std::vector<Param<T>> params_;
  std::vector<Slot> slots_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace lkreg
