#pragma once

#include <mtac/observation.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mtac {

enum class Pooling : std::uint32_t { kAttention = 0, kMean = 1 };

struct PolicyDims {
  int d_in = kObservationFeatures;
  int d_h = 16;
  int d_enc = 64;
  int heads = 4;
  Pooling pooling = Pooling::kAttention;

  void validate() const;
  bool operator==(const PolicyDims&) const = default;
};

inline constexpr int kActionDim = 3;
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using VectorView = Eigen::Map<Eigen::VectorXd>;
using ConstVectorView = Eigen::Map<const Eigen::VectorXd>;

// Offsets of every tensor inside the flat parameter vector. Tensors are
// stored row-major in declaration order:
//   per head: SAB value, query, key (d_h x (d_in+1)), SAB output (d_enc x (d_h+1))
//   PMA seed (d_h)                                       [attention pooling only]
//   per head: PMA value, key (d_h x (d_enc+1)), PMA output (d_enc x (d_h+1))
//   mean head (3 x (d_enc+1)), log-std head (3 x (d_enc+1)), value vector (d_enc)
struct ParamLayout {
  struct Block {
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  };
  std::vector<Block> sab_v, sab_q, sab_k, sab_o;
  Block seed;
  std::vector<Block> pma_v, pma_k, pma_o;
  Block mu, log_std, value;
  std::size_t total = 0;

  explicit ParamLayout(const PolicyDims& dims);
  std::vector<std::pair<std::string, Block>> named_blocks() const;
};

// All learnable weights, as one flat vector with typed views.
class PolicyParams {
 public:
  explicit PolicyParams(PolicyDims dims = {});

  // Glorot-uniform affine weights, zero biases, seed ~ N(0, 1/d_h),
  // log-std bias -0.5.
  static PolicyParams initialize(const PolicyDims& dims, std::mt19937_64& rng);

  const PolicyDims& dims() const { return dims_; }
  const ParamLayout& layout() const { return layout_; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  MatrixView matrix(const ParamLayout::Block& b);
  ConstMatrixView matrix(const ParamLayout::Block& b) const;
  VectorView vector(const ParamLayout::Block& b);
  ConstVectorView vector(const ParamLayout::Block& b) const;

  bool all_finite() const;
  bool operator==(const PolicyParams& o) const { return dims_ == o.dims_ && data_ == o.data_; }

 private:
  PolicyDims dims_;
  ParamLayout layout_;
  std::vector<double> data_;
};

struct PolicyOutput {
  Eigen::Vector3d mu = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_std = Eigen::Vector3d::Zero();
  double value = 0.0;
};

// Activations kept by the forward pass for backward().
struct ForwardCache {
  Eigen::MatrixXd x_aug;  // M x (d_in+1)
  std::vector<Eigen::MatrixXd> q, k, v, attn, z;
  Eigen::MatrixXd pre1, e1, e1_aug;
  std::vector<Eigen::MatrixXd> k2, v2;
  std::vector<Eigen::VectorXd> lambda2, z2;
  Eigen::VectorXd pre2, e2, e2_aug;
  Eigen::Vector3d raw_log_std = Eigen::Vector3d::Zero();
  PolicyOutput out;
};

// Self-attention block: per-target latents e1 (M x d_enc).
Eigen::MatrixXd sab_forward(const Eigen::MatrixXd& features, const PolicyParams& params);

// Attention pooling against the learned seed (or mean pooling for the
// DeepSets variant): pooled latent e2.
Eigen::VectorXd pma_forward(const Eigen::MatrixXd& latents, const PolicyParams& params);

PolicyOutput heads_forward(const Eigen::VectorXd& e2, const PolicyParams& params);

// Full forward pass over an encoded observation set (rows = targets).
PolicyOutput policy_forward(const Eigen::MatrixXd& features, const PolicyParams& params,
                            ForwardCache* cache = nullptr);

// SAB attention weights per head (each M x M, rows sum to 1) and PMA weights
// per head (each length M), for inspection and tests.
struct AttentionWeights {
  std::vector<Eigen::MatrixXd> sab;
  std::vector<Eigen::VectorXd> pma;
};
AttentionWeights attention_weights(const Eigen::MatrixXd& features, const PolicyParams& params);

// Reverse-mode pass. Accumulates (+=) d(loss)/d(params) into `grad` given
// upstream gradients on mu, log-std and V.
void policy_backward(const ForwardCache& cache, const PolicyParams& params,
                     const Eigen::Vector3d& d_mu, const Eigen::Vector3d& d_log_std,
                     double d_value, std::span<double> grad);

struct ActionSample {
  ViewpointAction action;
  Eigen::Vector3d pre_squash = Eigen::Vector3d::Zero();
  double log_prob = 0.0;           // density of the squashed action
  double gaussian_log_prob = 0.0;  // density of pre_squash under N(mu, sigma)
};

double gaussian_log_prob(const Eigen::Vector3d& z, const Eigen::Vector3d& mu,
                         const Eigen::Vector3d& log_std);
double gaussian_entropy(const Eigen::Vector3d& log_std);
// KL(old || new) between diagonal Gaussians.
double gaussian_kl(const Eigen::Vector3d& mu_old, const Eigen::Vector3d& log_std_old,
                   const Eigen::Vector3d& mu_new, const Eigen::Vector3d& log_std_new);

// -sum log(1 - tanh(z)^2), evaluated stably.
double tanh_log_det_correction(const Eigen::Vector3d& z);

ViewpointAction squash_action(const Eigen::Vector3d& z, const ActionBounds& bounds);

ActionSample sample_action(const PolicyOutput& out, const ActionBounds& bounds,
                           std::mt19937_64& rng);

// Mean action bounds * tanh(mu), used for evaluation.
ViewpointAction deterministic_action(const PolicyOutput& out, const ActionBounds& bounds);

// Little-endian checkpoint: "MTAC" magic, u32 version, u32 d_in, d_h, d_enc,
// heads, pooling, u64 parameter count, then the float64 parameters.
void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);
std::vector<unsigned char> serialize_params(const PolicyParams& params);
PolicyParams deserialize_params(std::span<const unsigned char> bytes);

}  // namespace mtac
