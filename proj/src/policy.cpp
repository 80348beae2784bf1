#include <mtac/policy.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace mtac {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'M', 'T', 'A', 'C'};
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd append_ones_col(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols() + 1);
  out.leftCols(m.cols()) = m;
  out.col(m.cols()).setOnes();
  return out;
}

Eigen::VectorXd append_one(const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size() + 1);
  out.head(v.size()) = v;
  out[v.size()] = 1.0;
  return out;
}

void softmax_rows(Eigen::MatrixXd& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& s) {
  const double mx = s.maxCoeff();
  Eigen::VectorXd e = (s.array() - mx).exp();
  return e / e.sum();
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void check_features(const Eigen::MatrixXd& features, const PolicyDims& dims) {
  if (features.rows() < 1) throw std::invalid_argument("policy: empty observation set");
  if (features.cols() != dims.d_in) {
    throw std::invalid_argument("policy: feature width does not match d_in");
  }
}

// Mutable view of a block inside a flat gradient buffer.
MatrixView grad_matrix(std::span<double> g, const ParamLayout::Block& b) {
  return MatrixView(g.data() + b.offset, b.rows, b.cols);
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
std::uint64_t get_le(std::span<const unsigned char> bytes, std::size_t& pos, int width) {
  if (pos + width > bytes.size()) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
  pos += width;
  return v;
}

}  // namespace

void PolicyDims::validate() const {
  if (d_in < 1 || d_h < 1 || d_enc < 1 || heads < 1) {
    throw std::invalid_argument("policy: all dimensions must be >= 1");
  }
  if (pooling != Pooling::kAttention && pooling != Pooling::kMean) {
    throw std::invalid_argument("policy: unknown pooling kind");
  }
}

ParamLayout::ParamLayout(const PolicyDims& dims) {
  dims.validate();
  auto take = [this](int rows, int cols) {
    Block b{total, rows, cols};
    total += b.size();
    return b;
  };
  for (int h = 0; h < dims.heads; ++h) {
    sab_v.push_back(take(dims.d_h, dims.d_in + 1));
    sab_q.push_back(take(dims.d_h, dims.d_in + 1));
    sab_k.push_back(take(dims.d_h, dims.d_in + 1));
    sab_o.push_back(take(dims.d_enc, dims.d_h + 1));
  }
  if (dims.pooling == Pooling::kAttention) {
    seed = take(dims.d_h, 1);
    for (int h = 0; h < dims.heads; ++h) {
      pma_v.push_back(take(dims.d_h, dims.d_enc + 1));
      pma_k.push_back(take(dims.d_h, dims.d_enc + 1));
      pma_o.push_back(take(dims.d_enc, dims.d_h + 1));
    }
  }
  mu = take(kActionDim, dims.d_enc + 1);
  log_std = take(kActionDim, dims.d_enc + 1);
  value = take(dims.d_enc, 1);
}

std::vector<std::pair<std::string, ParamLayout::Block>> ParamLayout::named_blocks() const {
  std::vector<std::pair<std::string, Block>> out;
  for (std::size_t h = 0; h < sab_v.size(); ++h) {
    const std::string s = std::to_string(h);
    out.emplace_back("sab_v" + s, sab_v[h]);
    out.emplace_back("sab_q" + s, sab_q[h]);
    out.emplace_back("sab_k" + s, sab_k[h]);
    out.emplace_back("sab_o" + s, sab_o[h]);
  }
  if (!pma_v.empty()) {
    out.emplace_back("pma_seed", seed);
    for (std::size_t h = 0; h < pma_v.size(); ++h) {
      const std::string s = std::to_string(h);
      out.emplace_back("pma_v" + s, pma_v[h]);
      out.emplace_back("pma_k" + s, pma_k[h]);
      out.emplace_back("pma_o" + s, pma_o[h]);
    }
  }
  out.emplace_back("mu", mu);
  out.emplace_back("log_std", log_std);
  out.emplace_back("value", value);
  return out;
}

PolicyParams::PolicyParams(PolicyDims dims)
    : dims_(dims), layout_(dims), data_(layout_.total, 0.0) {}

PolicyParams PolicyParams::initialize(const PolicyDims& dims, std::mt19937_64& rng) {
  PolicyParams p(dims);
  auto glorot = [&](const ParamLayout::Block& b) {
    const int fan_in = b.cols - 1;
    const int fan_out = b.rows;
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-lim, lim);
    auto m = p.matrix(b);
    for (int r = 0; r < b.rows; ++r) {
      for (int c = 0; c < fan_in; ++c) m(r, c) = u(rng);
      m(r, fan_in) = 0.0;
    }
  };
  const ParamLayout& L = p.layout();
  for (int h = 0; h < dims.heads; ++h) {
    glorot(L.sab_v[h]);
    glorot(L.sab_q[h]);
    glorot(L.sab_k[h]);
    glorot(L.sab_o[h]);
  }
  if (dims.pooling == Pooling::kAttention) {
    std::normal_distribution<double> n(0.0, 1.0);
    auto s = p.vector(L.seed);
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = n(rng) / std::sqrt(static_cast<double>(dims.d_h));
    for (int h = 0; h < dims.heads; ++h) {
      glorot(L.pma_v[h]);
      glorot(L.pma_k[h]);
      glorot(L.pma_o[h]);
    }
  }
  glorot(L.mu);
  glorot(L.log_std);
  p.matrix(L.log_std).col(dims.d_enc).setConstant(-0.5);
  {
    const double lim = std::sqrt(6.0 / (dims.d_enc + 1));
    std::uniform_real_distribution<double> u(-lim, lim);
    auto v = p.vector(L.value);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
  }
  return p;
}

MatrixView PolicyParams::matrix(const ParamLayout::Block& b) {
  return MatrixView(data_.data() + b.offset, b.rows, b.cols);
}
ConstMatrixView PolicyParams::matrix(const ParamLayout::Block& b) const {
  return ConstMatrixView(data_.data() + b.offset, b.rows, b.cols);
}
VectorView PolicyParams::vector(const ParamLayout::Block& b) {
  return VectorView(data_.data() + b.offset, static_cast<Eigen::Index>(b.size()));
}
ConstVectorView PolicyParams::vector(const ParamLayout::Block& b) const {
  return ConstVectorView(data_.data() + b.offset, static_cast<Eigen::Index>(b.size()));
}

bool PolicyParams::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

PolicyOutput policy_forward(const Eigen::MatrixXd& features, const PolicyParams& params,
                            ForwardCache* cache) {
  const PolicyDims& d = params.dims();
  const ParamLayout& L = params.layout();
  check_features(features, d);
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const Eigen::Index m = features.rows();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d.d_h));

  c.x_aug = append_ones_col(features);
  c.q.resize(d.heads);
  c.k.resize(d.heads);
  c.v.resize(d.heads);
  c.attn.resize(d.heads);
  c.z.resize(d.heads);
  c.pre1 = Eigen::MatrixXd::Zero(m, d.d_enc);
  for (int h = 0; h < d.heads; ++h) {
    c.q[h].noalias() = c.x_aug * params.matrix(L.sab_q[h]).transpose();
    c.k[h].noalias() = c.x_aug * params.matrix(L.sab_k[h]).transpose();
    c.v[h].noalias() = c.x_aug * params.matrix(L.sab_v[h]).transpose();
    c.attn[h].noalias() = inv_sqrt * c.q[h] * c.k[h].transpose();
    softmax_rows(c.attn[h]);
    c.z[h].noalias() = c.attn[h] * c.v[h];
    const auto wo = params.matrix(L.sab_o[h]);
    c.pre1.noalias() += c.z[h] * wo.leftCols(d.d_h).transpose();
    c.pre1.rowwise() += wo.col(d.d_h).transpose();
  }
  c.e1 = c.pre1.cwiseMax(0.0);

  if (d.pooling == Pooling::kAttention) {
    c.e1_aug = append_ones_col(c.e1);
    c.k2.resize(d.heads);
    c.v2.resize(d.heads);
    c.lambda2.resize(d.heads);
    c.z2.resize(d.heads);
    c.pre2 = Eigen::VectorXd::Zero(d.d_enc);
    const auto seed = params.vector(L.seed);
    for (int h = 0; h < d.heads; ++h) {
      c.k2[h].noalias() = c.e1_aug * params.matrix(L.pma_k[h]).transpose();
      c.v2[h].noalias() = c.e1_aug * params.matrix(L.pma_v[h]).transpose();
      c.lambda2[h] = softmax(inv_sqrt * (c.k2[h] * seed));
      c.z2[h].noalias() = c.v2[h].transpose() * c.lambda2[h];
      const auto wo = params.matrix(L.pma_o[h]);
      c.pre2.noalias() += wo.leftCols(d.d_h) * c.z2[h];
      c.pre2 += wo.col(d.d_h);
    }
    c.e2 = c.pre2.cwiseMax(0.0);
  } else {
    c.e2 = c.e1.colwise().mean().transpose();
  }

  c.e2_aug = append_one(c.e2);
  c.out.mu.noalias() = params.matrix(L.mu) * c.e2_aug;
  c.raw_log_std.noalias() = params.matrix(L.log_std) * c.e2_aug;
  c.out.log_std = c.raw_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  c.out.value = params.vector(L.value).dot(c.e2);
  return c.out;
}

Eigen::MatrixXd sab_forward(const Eigen::MatrixXd& features, const PolicyParams& params) {
  ForwardCache c;
  policy_forward(features, params, &c);
  return c.e1;
}

Eigen::VectorXd pma_forward(const Eigen::MatrixXd& latents, const PolicyParams& params) {
  const PolicyDims& d = params.dims();
  const ParamLayout& L = params.layout();
  if (latents.rows() < 1) throw std::invalid_argument("policy: empty latent set");
  if (latents.cols() != d.d_enc) throw std::invalid_argument("policy: latent width mismatch");
  if (d.pooling == Pooling::kMean) return latents.colwise().mean().transpose();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d.d_h));
  const Eigen::MatrixXd e1_aug = append_ones_col(latents);
  const auto seed = params.vector(L.seed);
  Eigen::VectorXd pre2 = Eigen::VectorXd::Zero(d.d_enc);
  for (int h = 0; h < d.heads; ++h) {
    const Eigen::MatrixXd k2 = e1_aug * params.matrix(L.pma_k[h]).transpose();
    const Eigen::MatrixXd v2 = e1_aug * params.matrix(L.pma_v[h]).transpose();
    const Eigen::VectorXd lam = softmax(inv_sqrt * (k2 * seed));
    const Eigen::VectorXd z2 = v2.transpose() * lam;
    const auto wo = params.matrix(L.pma_o[h]);
    pre2 += wo.leftCols(d.d_h) * z2 + wo.col(d.d_h);
  }
  return pre2.cwiseMax(0.0);
}

PolicyOutput heads_forward(const Eigen::VectorXd& e2, const PolicyParams& params) {
  const ParamLayout& L = params.layout();
  if (e2.size() != params.dims().d_enc) throw std::invalid_argument("policy: latent width mismatch");
  const Eigen::VectorXd aug = append_one(e2);
  PolicyOutput out;
  out.mu = params.matrix(L.mu) * aug;
  out.log_std = (params.matrix(L.log_std) * aug).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  out.value = params.vector(L.value).dot(e2);
  return out;
}

AttentionWeights attention_weights(const Eigen::MatrixXd& features, const PolicyParams& params) {
  ForwardCache c;
  policy_forward(features, params, &c);
  return {c.attn, c.lambda2};
}

void policy_backward(const ForwardCache& c, const PolicyParams& params,
                     const Eigen::Vector3d& d_mu, const Eigen::Vector3d& d_log_std,
                     double d_value, std::span<double> grad) {
  const PolicyDims& d = params.dims();
  const ParamLayout& L = params.layout();
  if (grad.size() != params.size()) throw std::invalid_argument("policy: gradient size mismatch");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d.d_h));
  const Eigen::Index m = c.x_aug.rows();

  // Heads.
  VectorView(grad.data() + L.value.offset, d.d_enc) += d_value * c.e2;
  Eigen::VectorXd de2 = d_value * params.vector(L.value);

  grad_matrix(grad, L.mu).noalias() += d_mu * c.e2_aug.transpose();
  de2.noalias() += params.matrix(L.mu).leftCols(d.d_enc).transpose() * d_mu;

  Eigen::Vector3d d_raw;
  for (int i = 0; i < kActionDim; ++i) {
    const bool inside = c.raw_log_std[i] > kLogStdMin && c.raw_log_std[i] < kLogStdMax;
    d_raw[i] = inside ? d_log_std[i] : 0.0;
  }
  grad_matrix(grad, L.log_std).noalias() += d_raw * c.e2_aug.transpose();
  de2.noalias() += params.matrix(L.log_std).leftCols(d.d_enc).transpose() * d_raw;

  // Pooling.
  Eigen::MatrixXd de1 = Eigen::MatrixXd::Zero(m, d.d_enc);
  if (d.pooling == Pooling::kAttention) {
    const Eigen::VectorXd dpre2 = (c.pre2.array() > 0.0).select(de2, 0.0);
    const auto seed = params.vector(L.seed);
    VectorView dseed(grad.data() + L.seed.offset, d.d_h);
    for (int h = 0; h < d.heads; ++h) {
      const auto wo = params.matrix(L.pma_o[h]);
      auto gwo = grad_matrix(grad, L.pma_o[h]);
      gwo.leftCols(d.d_h).noalias() += dpre2 * c.z2[h].transpose();
      gwo.col(d.d_h) += dpre2;
      const Eigen::VectorXd dz2 = wo.leftCols(d.d_h).transpose() * dpre2;

      const Eigen::MatrixXd dv2 = c.lambda2[h] * dz2.transpose();  // M x d_h
      const Eigen::VectorXd dlam = c.v2[h] * dz2;                  // M
      const double dot = c.lambda2[h].dot(dlam);
      const Eigen::VectorXd ds = c.lambda2[h].cwiseProduct((dlam.array() - dot).matrix());
      dseed.noalias() += inv_sqrt * c.k2[h].transpose() * ds;
      const Eigen::MatrixXd dk2 = inv_sqrt * ds * seed.transpose();  // M x d_h

      grad_matrix(grad, L.pma_k[h]).noalias() += dk2.transpose() * c.e1_aug;
      grad_matrix(grad, L.pma_v[h]).noalias() += dv2.transpose() * c.e1_aug;
      de1.noalias() += dk2 * params.matrix(L.pma_k[h]).leftCols(d.d_enc);
      de1.noalias() += dv2 * params.matrix(L.pma_v[h]).leftCols(d.d_enc);
    }
  } else {
    de1.rowwise() = de2.transpose() / static_cast<double>(m);
  }

  // Self-attention block.
  const Eigen::MatrixXd dpre1 = (c.pre1.array() > 0.0).select(de1, 0.0);
  for (int h = 0; h < d.heads; ++h) {
    const auto wo = params.matrix(L.sab_o[h]);
    auto gwo = grad_matrix(grad, L.sab_o[h]);
    gwo.leftCols(d.d_h).noalias() += dpre1.transpose() * c.z[h];
    gwo.col(d.d_h) += dpre1.colwise().sum().transpose();
    const Eigen::MatrixXd dz = dpre1 * wo.leftCols(d.d_h);  // M x d_h

    const Eigen::MatrixXd dattn = dz * c.v[h].transpose();  // M x M
    const Eigen::MatrixXd dv = c.attn[h].transpose() * dz;  // M x d_h
    const Eigen::VectorXd row_dot = (dattn.cwiseProduct(c.attn[h])).rowwise().sum();
    const Eigen::MatrixXd ds =
        c.attn[h].cwiseProduct((dattn.colwise() - row_dot)) * inv_sqrt;
    const Eigen::MatrixXd dq = ds * c.k[h];
    const Eigen::MatrixXd dk = ds.transpose() * c.q[h];

    grad_matrix(grad, L.sab_q[h]).noalias() += dq.transpose() * c.x_aug;
    grad_matrix(grad, L.sab_k[h]).noalias() += dk.transpose() * c.x_aug;
    grad_matrix(grad, L.sab_v[h]).noalias() += dv.transpose() * c.x_aug;
  }
}

double gaussian_log_prob(const Eigen::Vector3d& z, const Eigen::Vector3d& mu,
                         const Eigen::Vector3d& log_std) {
  double lp = 0.0;
  for (int i = 0; i < kActionDim; ++i) {
    const double u = (z[i] - mu[i]) * std::exp(-log_std[i]);
    lp += -0.5 * u * u - log_std[i] - kHalfLog2Pi;
  }
  return lp;
}

double gaussian_entropy(const Eigen::Vector3d& log_std) {
  const double per_dim = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return log_std.sum() + kActionDim * per_dim;
}

double gaussian_kl(const Eigen::Vector3d& mu_old, const Eigen::Vector3d& log_std_old,
                   const Eigen::Vector3d& mu_new, const Eigen::Vector3d& log_std_new) {
  double kl = 0.0;
  for (int i = 0; i < kActionDim; ++i) {
    const double var_old = std::exp(2.0 * log_std_old[i]);
    const double var_new = std::exp(2.0 * log_std_new[i]);
    const double dm = mu_old[i] - mu_new[i];
    kl += log_std_new[i] - log_std_old[i] + (var_old + dm * dm) / (2.0 * var_new) - 0.5;
  }
  return kl;
}

double tanh_log_det_correction(const Eigen::Vector3d& z) {
  // log(1 - tanh(z)^2) = 2 (log 2 - z - softplus(-2z))
  double s = 0.0;
  for (int i = 0; i < kActionDim; ++i) {
    s += 2.0 * (std::numbers::ln2 - z[i] - softplus(-2.0 * z[i]));
  }
  return -s;
}

ViewpointAction squash_action(const Eigen::Vector3d& z, const ActionBounds& bounds) {
  const Eigen::Vector3d a = bounds.limits.cwiseProduct(z.array().tanh().matrix());
  return ViewpointAction::from_vector(a);
}

ActionSample sample_action(const PolicyOutput& out, const ActionBounds& bounds,
                           std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ActionSample s;
  for (int i = 0; i < kActionDim; ++i) {
    s.pre_squash[i] = out.mu[i] + std::exp(out.log_std[i]) * n(rng);
  }
  s.action = squash_action(s.pre_squash, bounds);
  s.gaussian_log_prob = gaussian_log_prob(s.pre_squash, out.mu, out.log_std);
  s.log_prob = s.gaussian_log_prob + tanh_log_det_correction(s.pre_squash);
  return s;
}

ViewpointAction deterministic_action(const PolicyOutput& out, const ActionBounds& bounds) {
  return squash_action(out.mu, bounds);
}

std::vector<unsigned char> serialize_params(const PolicyParams& params) {
  const PolicyDims& d = params.dims();
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(d.d_in));
  put_u32(out, static_cast<std::uint32_t>(d.d_h));
  put_u32(out, static_cast<std::uint32_t>(d.d_enc));
  put_u32(out, static_cast<std::uint32_t>(d.heads));
  put_u32(out, static_cast<std::uint32_t>(d.pooling));
  put_u64(out, params.size());
  out.reserve(out.size() + 8 * params.size());
  for (double v : params.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

PolicyParams deserialize_params(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  std::size_t pos = 4;
  const auto version = static_cast<std::uint32_t>(get_le(bytes, pos, 4));
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  PolicyDims d;
  d.d_in = static_cast<int>(get_le(bytes, pos, 4));
  d.d_h = static_cast<int>(get_le(bytes, pos, 4));
  d.d_enc = static_cast<int>(get_le(bytes, pos, 4));
  d.heads = static_cast<int>(get_le(bytes, pos, 4));
  d.pooling = static_cast<Pooling>(get_le(bytes, pos, 4));
  PolicyParams p(d);
  const std::uint64_t count = get_le(bytes, pos, 8);
  if (count != p.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (double& v : p.data()) v = std::bit_cast<double>(get_le(bytes, pos, 8));
  if (pos != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
  return p;
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize_params(params);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

}  // namespace mtac
