#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

// Patch-wise adaptation: per-position gating over edge/depth/segmentation
// feature grids with straight-through hard selection, plus a manual
// reverse-mode pass. Everything is templated on the scalar type; double is
// the verification path and float the production path.
namespace augkit::pam {

inline constexpr int kNumConditions = 3;
inline constexpr int kPackChannels = 21;
inline constexpr std::array<int, 3> kSliceStart = {0, 15, 18};
inline constexpr std::array<const char*, 3> kConditionNames = {"edge", "dep", "seg"};

/// Channel-major planar tensor [c, h, w].
template <typename T>
struct Grid {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> values;

  static Grid zeros(int c, int h, int w);
  T& at(int c, int y, int x) { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  T at(int c, int y, int x) const { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(const Grid& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const Grid&) const = default;
};

/// Packs three 3-channel maps into the 21-channel layout; the other 12
/// channels stay zero. Throws ValidationError on shape mismatch.
Grid<float> pack_conditions(const Grid<float>& edge, const Grid<float>& depth,
                            const Grid<float>& seg);
std::array<Grid<float>, 3> unpack_conditions(const Grid<float>& pack);

struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  std::vector<double> weights;  ///< [out, in, k, k]
  std::vector<double> bias;     ///< [out]
};

struct StemConfig {
  int out_channels = 192;
  int kernel = 3;
  bool activation = true;
};

/// Three stride-2 convolutions with widths out/4, out/2, out.
struct Stem {
  std::vector<ConvLayer> layers;
  bool activation = true;

  static Stem init(const StemConfig& config, uint64_t seed);
  static constexpr int kStride = 8;
};

/// Throws ValidationError when the spatial dims are not divisible by 8.
template <typename T>
Grid<T> stem_forward(const Grid<T>& input, const Stem& stem);

struct PamConfig {
  int d = 8;              ///< feature width D
  int context_dim = 8;    ///< width of q
  int timestep_dim = 8;   ///< width of the timestep embedding
  int text_dim = 8;       ///< width of the pooled text context
  int ffn_mult = 4;
  double tau = 1.0;
  int residual_blocks = 2;
  double ln_eps = 1e-5;

  void validate() const;
};

enum class Block : int {
  kWIn, kBIn, kLn1Gamma, kLn1Beta,
  kWQ, kWK, kWV, kWC, kWO,
  kLn2Gamma, kLn2Beta, kW1, kB1, kW2, kB2,
  kWG, kBG,
  kPsiTW, kPsiTB, kPsiCW, kPsiCB,
  kResidualBase,  ///< then 4 blocks per residual unit: conv1 w/b, conv2 w/b
};

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size() const;
};

std::vector<ParamBlock> param_layout(const PamConfig& config);

template <typename T>
struct PamParams {
  PamConfig config;
  std::vector<ParamBlock> blocks;
  std::vector<T> values;

  /// Uniform in [-0.1, 0.1]; layer-norm scales are 1 + U(-0.1, 0.1).
  static PamParams init(const PamConfig& config, uint64_t seed);
  static PamParams zeros(const PamConfig& config);

  T* data(Block b) { return values.data() + blocks[static_cast<int>(b)].offset; }
  const T* data(Block b) const { return values.data() + blocks[static_cast<int>(b)].offset; }
  T* residual(int unit, int j) { return data(static_cast<Block>(static_cast<int>(Block::kResidualBase) + 4 * unit + j)); }
  const T* residual(int unit, int j) const { return data(static_cast<Block>(static_cast<int>(Block::kResidualBase) + 4 * unit + j)); }

  template <typename U>
  PamParams<U> cast() const;
};

/// Writes `<path>` (ACTF, flat f32 values) and `<path>.json` (config and
/// block index). load checks that the index matches the config's layout.
void save_params(const PamParams<double>& params, const std::filesystem::path& path);
PamParams<double> load_params(const std::filesystem::path& path);

template <typename T>
struct SelectionWeights {
  std::array<T, 3> pi{};
  std::array<T, 3> y{};
  std::array<T, 3> w{};  ///< forward value, equal to y
  int selected = 0;
};

/// pi = softmax(s / tau); y one-hot at argmax(s), ties to the lowest index.
template <typename T>
SelectionWeights<T> ste_select(std::span<const T, 3> s, double tau);

enum class MixMode { kHard, kSoft };

/// Hard mode copies the selected feature; soft mode forms sum_k pi_k f^k.
template <typename T>
void pam_mix(const SelectionWeights<T>& weights, std::span<const T* const, 3> features,
             std::size_t d, std::span<T> out, MixMode mode = MixMode::kHard);

/// q = psi_t(t) + psi_c(c).
template <typename T>
std::vector<T> context_vector(std::span<const T> timestep_emb, std::span<const T> text_pool,
                              const PamParams<T>& params);

template <typename T>
struct GateCache {
  std::vector<T> x, a, h, n1, rstd1, q, k, v, kt, vt, attn, z, xp, n2, rstd2, u, act, xpp;
  std::array<T, 3> scores{};
};

/// Scores for one position. tokens is 3 x D row-major; context is W_C q.
template <typename T>
std::array<T, 3> gate_forward(std::span<const T> tokens, std::span<const T> context,
                              const PamParams<T>& params, GateCache<T>* cache = nullptr);

/// Context-modulation vector W_C q, shared by all positions.
template <typename T>
std::vector<T> gate_context(std::span<const T> q, const PamParams<T>& params);

template <typename T>
struct PamInputs {
  std::array<Grid<T>, 3> grids;  ///< edge, dep, seg features, each D x H x W
  std::vector<T> timestep_emb;
  std::vector<T> text_pool;

  void validate(const PamConfig& config) const;
  template <typename U>
  PamInputs<U> cast() const;
};

template <typename T>
struct PamForward {
  MixMode mode = MixMode::kHard;
  std::size_t param_count = 0;
  std::vector<T> q, context;
  std::vector<GateCache<T>> gates;          ///< per position, row-major
  std::vector<SelectionWeights<T>> weights; ///< per position
  Grid<T> selected;                         ///< reassembled mixed features
  std::vector<Grid<T>> residual_inputs;     ///< input of each residual unit
  std::vector<Grid<T>> residual_hidden;     ///< pre-activation of each unit
  Grid<T> output;                           ///< after the residual units
};

/// Throws MetricError naming the position on a non-finite score.
template <typename T>
PamForward<T> pam_forward(const PamInputs<T>& inputs, const PamParams<T>& params,
                          MixMode mode = MixMode::kHard, unsigned threads = 1);

template <typename T>
struct PamGrads {
  std::vector<T> params;  ///< same layout as PamParams::values
  std::array<Grid<T>, 3> grids;
  std::vector<T> q;
  std::vector<T> timestep_emb;
  std::vector<T> text_pool;
};

/// Reverse pass of pam_forward. The mixing weights are differentiated as pi
/// in either mode; in hard mode the feature path uses y. Throws
/// ValidationError if the cache does not match the inputs.
template <typename T>
PamGrads<T> pam_backward(const PamInputs<T>& inputs, const PamParams<T>& params,
                         const PamForward<T>& forward, const Grid<T>& grad_output,
                         unsigned threads = 1);

/// Sum of grad_output * output.
template <typename T>
T surrogate_loss(const PamForward<T>& forward, const Grid<T>& grad_output);

struct FdOptions {
  double eps = 1e-4;
  double floor = 1e-6;  ///< lower bound of the relative-error denominator
  unsigned threads = 1;
  bool corrupt_gradient = false;  ///< negative control for the harness
};

struct FdGroup {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0;
  double max_abs_error = 0;
};

struct FdReport {
  std::vector<FdGroup> groups;
  double max_rel_error = 0;
};

/// Compares pam_backward on the soft surrogate against central differences
/// of sum(G * output) for every parameter and every input scalar.
FdReport finite_diff_check(const PamParams<double>& params, const PamInputs<double>& inputs,
                           const Grid<double>& grad_output, const FdOptions& options);

/// Random instance: params, inputs with D x H x W grids, and fixed G.
struct FdInstance {
  PamParams<double> params;
  PamInputs<double> inputs;
  Grid<double> grad_output;
};
FdInstance make_fd_instance(const PamConfig& config, int height, int width, uint64_t seed);

}  // namespace augkit::pam
