#pragma once

// The HAL model: transformer backbone phi, Gaussian visual/action
// encoders psi/eta, decoders kappa/xi, linear classifier Gamma, and
// learned one-step conditional Gaussian priors for both latent levels
// (standard normal at t = 1). The ELBO follows the usual Gaussian
// VAE form; the backbone output is treated as the observation, so the
// reconstruction target carries no gradient.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hal/autodiff.hpp"
#include "hal/core.hpp"
#include "hal/rng.hpp"

namespace hal::net {

using ad::Var;
using core::Matrix;
using core::PosteriorMatrix;
using rng::Rng;

enum class Attention { kFull, kCausal, kNone };

inline Attention attention_from_string(const std::string& s) {
  if (s == "full") return Attention::kFull;
  if (s == "causal") return Attention::kCausal;
  if (s == "none") return Attention::kNone;
  throw std::invalid_argument("attention: expected full|causal|none, got '" + s + "'");
}

inline std::string to_string(Attention a) {
  switch (a) {
    case Attention::kFull: return "full";
    case Attention::kCausal: return "causal";
    default: return "none";
  }
}

struct NetConfig {
  int d = 8;
  int hidden = 256;
  int n_v = 4;
  int n_c = 2;
  int num_classes = 4;
  int layers = 2;
  int heads = 4;
  Attention attention = Attention::kFull;
  bool positional = true;

  void validate() const {
    core::require(d >= 1 && hidden >= 1 && n_v >= 1 && n_c >= 1 && num_classes >= 2,
                  "NetConfig: dimensions must be positive (num_classes >= 2)");
    core::require(layers >= 0 && heads >= 1, "NetConfig: bad layers/heads");
    core::require(hidden % heads == 0, "NetConfig: hidden must be divisible by heads");
  }
};

struct ParamStore {
  std::vector<std::pair<std::string, Var>> items;

  Var add(const std::string& name, Matrix init) {
    auto v = ad::param(std::move(init));
    items.emplace_back(name, v);
    return v;
  }
  Var find(const std::string& name) const {
    for (const auto& [n, v] : items)
      if (n == name) return v;
    throw std::invalid_argument("parameter not found: " + name);
  }
  void zero_grad() {
    for (auto& [n, v] : items)
      if (v->grad.size()) v->grad.setZero();
  }
  long total_size() const {
    long s = 0;
    for (const auto& [n, v] : items) s += v->val.size();
    return s;
  }
};

inline Matrix xavier(Rng& rng, int in, int out) {
  const double std = std::sqrt(2.0 / (in + out));
  Matrix m(in, out);
  for (int r = 0; r < in; ++r)
    for (int c = 0; c < out; ++c) m(r, c) = rng.normal(0.0, std);
  return m;
}

struct Linear {
  Var w;  // in x out
  Var b;  // 1 x out

  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng)
      : w(ps.add(prefix + ".w", xavier(rng, in, out))),
        b(ps.add(prefix + ".b", Matrix::Zero(1, out))) {}

  Var operator()(const Var& x) const { return ad::add_rowvec(ad::matmul(x, w), b); }
};

struct LayerNormP {
  Var gamma, beta;

  LayerNormP() = default;
  LayerNormP(ParamStore& ps, const std::string& prefix, int n)
      : gamma(ps.add(prefix + ".gamma", Matrix::Ones(1, n))),
        beta(ps.add(prefix + ".beta", Matrix::Zero(1, n))) {}

  Var operator()(const Var& x) const { return ad::layer_norm(x, gamma, beta); }
};

inline Matrix causal_mask(Eigen::Index T) {
  Matrix m = Matrix::Zero(T, T);
  for (Eigen::Index r = 0; r < T; ++r)
    for (Eigen::Index c = r + 1; c < T; ++c) m(r, c) = -1e30;
  return m;
}

struct SelfAttention {
  Linear q, k, v, o;
  int heads = 1;

  SelfAttention() = default;
  SelfAttention(ParamStore& ps, const std::string& prefix, int width, int heads_, Rng& rng)
      : q(ps, prefix + ".q", width, width, rng),
        k(ps, prefix + ".k", width, width, rng),
        v(ps, prefix + ".v", width, width, rng),
        o(ps, prefix + ".o", width, width, rng),
        heads(heads_) {}

  Var operator()(const Var& x, Attention mode) const {
    using namespace ad;
    const Eigen::Index T = x->val.rows();
    const Eigen::Index width = x->val.cols();
    const Eigen::Index dh = width / heads;
    Var qq = q(x), kk = k(x), vv = v(x);
    Var mask;
    if (mode == Attention::kCausal) mask = constant(causal_mask(T));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Var qh = slice_cols(qq, h * dh, dh);
      Var kh = slice_cols(kk, h * dh, dh);
      Var vh = slice_cols(vv, h * dh, dh);
      Var scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
      if (mode == Attention::kCausal) scores = add(scores, mask);
      outs.push_back(matmul(row_softmax(scores), vh));
    }
    return o(hcat(outs));
  }
};

// Pre-norm transformer block: x + attn(ln(x)), then x + ffn(ln(x)).
struct TransformerBlock {
  LayerNormP ln1, ln2;
  SelfAttention attn;
  Linear ff1, ff2;

  TransformerBlock() = default;
  TransformerBlock(ParamStore& ps, const std::string& prefix, int width, int heads, Rng& rng)
      : ln1(ps, prefix + ".ln1", width),
        ln2(ps, prefix + ".ln2", width),
        attn(ps, prefix + ".attn", width, heads, rng),
        ff1(ps, prefix + ".ff1", width, 2 * width, rng),
        ff2(ps, prefix + ".ff2", 2 * width, width, rng) {}

  Var operator()(const Var& x, Attention mode) const {
    using namespace ad;
    Var a = (mode == Attention::kNone) ? x : add(x, attn(ln1(x), mode));
    return add(a, ff2(relu(ff1(ln2(a)))));
  }
};

inline Matrix sinusoidal_positions(Eigen::Index T, Eigen::Index width) {
  Matrix p(T, width);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < width; ++i) {
      const double omega = std::pow(10000.0, -2.0 * double(i / 2) / double(width));
      p(t, i) = (i % 2 == 0) ? std::sin(t * omega) : std::cos(t * omega);
    }
  return p;
}

struct ForwardPass {
  Eigen::Index T = 0;
  Var b;                     // T x h backbone features
  Var mu_v, logvar_v, vhat;  // T x n_v
  Var mu_c, logvar_c, chat;  // T x n_c
  Var bhat;                  // T x h
  Var vprime;                // T x n_v
  Var logits;                // T x |U|
  Var prior_mu_v, prior_logvar_v;  // T x n_v, row 0 = standard normal
  Var prior_mu_c, prior_logvar_c;  // T x n_c
};

struct HalModel {
  NetConfig cfg;
  ParamStore params;
  Linear in_proj;
  std::vector<TransformerBlock> blocks;
  LayerNormP final_ln;
  Linear psi_fc, psi_mu, psi_logvar;
  Linear eta_fc, eta_mu, eta_logvar;
  Linear kappa_fc, kappa_out;
  Linear xi_fc, xi_out;
  Linear classifier;
  Linear prior_v_fc, prior_v_mu, prior_v_logvar;
  Linear prior_c_fc, prior_c_mu, prior_c_logvar;

  HalModel(const NetConfig& c, std::uint64_t seed) : cfg(c) {
    cfg.validate();
    Rng rng(rng::derive_seed(seed, "init", 0));
    const int h = cfg.hidden;
    in_proj = Linear(params, "backbone.in_proj", cfg.d, h, rng);
    for (int l = 0; l < cfg.layers; ++l)
      blocks.emplace_back(params, "backbone.block" + std::to_string(l), h, cfg.heads, rng);
    final_ln = LayerNormP(params, "backbone.final_ln", h);
    psi_fc = Linear(params, "psi.fc", h, h, rng);
    psi_mu = Linear(params, "psi.mu", h, cfg.n_v, rng);
    psi_logvar = Linear(params, "psi.logvar", h, cfg.n_v, rng);
    eta_fc = Linear(params, "eta.fc", cfg.n_v, h, rng);
    eta_mu = Linear(params, "eta.mu", h, cfg.n_c, rng);
    eta_logvar = Linear(params, "eta.logvar", h, cfg.n_c, rng);
    kappa_fc = Linear(params, "kappa.fc", cfg.n_v, 2 * h, rng);
    kappa_out = Linear(params, "kappa.out", 2 * h, h, rng);
    xi_fc = Linear(params, "xi.fc", cfg.n_c, 2 * h, rng);
    xi_out = Linear(params, "xi.out", 2 * h, cfg.n_v, rng);
    classifier = Linear(params, "gamma.out", cfg.n_c, cfg.num_classes, rng);
    prior_v_fc = Linear(params, "prior_v.fc", cfg.n_v, h, rng);
    prior_v_mu = Linear(params, "prior_v.mu", h, cfg.n_v, rng);
    prior_v_logvar = Linear(params, "prior_v.logvar", h, cfg.n_v, rng);
    prior_c_fc = Linear(params, "prior_c.fc", cfg.n_c, h, rng);
    prior_c_mu = Linear(params, "prior_c.mu", h, cfg.n_c, rng);
    prior_c_logvar = Linear(params, "prior_c.logvar", h, cfg.n_c, rng);
  }

  Var backbone(const Var& x) const {
    using namespace ad;
    Var hcur = in_proj(x);
    if (cfg.positional)
      hcur = add(hcur, constant(sinusoidal_positions(x->val.rows(), cfg.hidden)));
    for (const auto& blk : blocks) hcur = blk(hcur, cfg.attention);
    return final_ln(hcur);
  }
};

inline void check_finite(const Var& v, const std::string& map_name) {
  if (!v->val.allFinite())
    throw std::runtime_error("nonfinite activations in " + map_name);
}

inline Matrix gaussian_like(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

inline ForwardPass forward(const HalModel& model, const Matrix& x, std::uint64_t sample_seed,
                           bool train_mode) {
  using namespace ad;
  core::require(x.cols() == model.cfg.d, "forward: input width mismatch");
  const Eigen::Index T = x.rows();
  ForwardPass fp;
  fp.T = T;

  Var input = constant(x);
  fp.b = model.backbone(input);
  check_finite(fp.b, "phi");

  Var ph = relu(model.psi_fc(fp.b));
  fp.mu_v = model.psi_mu(ph);
  fp.logvar_v = clamp(model.psi_logvar(ph), -8.0, 8.0);
  check_finite(fp.mu_v, "psi");
  if (train_mode) {
    Rng rv(rng::derive_seed(sample_seed, "eps_v", 0));
    Var eps = constant(gaussian_like(rv, T, model.cfg.n_v));
    fp.vhat = add(fp.mu_v, mul(exp_(scale(fp.logvar_v, 0.5)), eps));
  } else {
    fp.vhat = fp.mu_v;
  }

  Var eh = relu(model.eta_fc(fp.vhat));
  fp.mu_c = model.eta_mu(eh);
  fp.logvar_c = clamp(model.eta_logvar(eh), -8.0, 8.0);
  check_finite(fp.mu_c, "eta");
  if (train_mode) {
    Rng rc(rng::derive_seed(sample_seed, "eps_c", 0));
    Var eps = constant(gaussian_like(rc, T, model.cfg.n_c));
    fp.chat = add(fp.mu_c, mul(exp_(scale(fp.logvar_c, 0.5)), eps));
  } else {
    fp.chat = fp.mu_c;
  }

  fp.bhat = model.kappa_out(relu(model.kappa_fc(fp.vhat)));
  check_finite(fp.bhat, "kappa");
  fp.vprime = model.xi_out(relu(model.xi_fc(fp.chat)));
  check_finite(fp.vprime, "xi");
  fp.logits = model.classifier(fp.chat);
  check_finite(fp.logits, "gamma");

  // one-step conditional priors; t = 1 is standard normal
  Var zero_v = constant(Matrix::Zero(1, model.cfg.n_v));
  Var zero_c = constant(Matrix::Zero(1, model.cfg.n_c));
  if (T > 1) {
    Var pv_in = slice_rows(fp.vhat, 0, T - 1);
    Var pvh = relu(model.prior_v_fc(pv_in));
    fp.prior_mu_v = vcat(zero_v, model.prior_v_mu(pvh));
    fp.prior_logvar_v = vcat(zero_v, clamp(model.prior_v_logvar(pvh), -8.0, 8.0));
    Var pc_in = slice_rows(fp.chat, 0, T - 1);
    Var pch = relu(model.prior_c_fc(pc_in));
    fp.prior_mu_c = vcat(zero_c, model.prior_c_mu(pch));
    fp.prior_logvar_c = vcat(zero_c, clamp(model.prior_c_logvar(pch), -8.0, 8.0));
  } else {
    fp.prior_mu_v = zero_v;
    fp.prior_logvar_v = constant(Matrix::Zero(1, model.cfg.n_v));
    fp.prior_mu_c = zero_c;
    fp.prior_logvar_c = constant(Matrix::Zero(1, model.cfg.n_c));
  }
  return fp;
}

// Elementwise KL(N(mu_q, e^{lq}) || N(mu_p, e^{lp})).
inline Var gaussian_kl_elem(const Var& mu_q, const Var& lq, const Var& mu_p, const Var& lp) {
  using namespace ad;
  Var ratio = exp_(sub(lq, lp));
  Var maha = mul(square(sub(mu_q, mu_p)), exp_(neg(lp)));
  Var logs = sub(lp, lq);
  Var ones = constant(Matrix::Ones(mu_q->val.rows(), mu_q->val.cols()));
  return scale(sub(add(add(ratio, maha), logs), ones), 0.5);
}

struct ElboGraph {
  Var recon;  // 1x1
  Var kl_v;   // 1x1
  Var kl_c;   // 1x1
};

// recon = MSE(b, bhat) / (2 sigma_obs^2) with sigma_obs = 1 and the
// target detached; KLs are summed over latent dims, averaged over T.
inline ElboGraph elbo(const ForwardPass& fp) {
  using namespace ad;
  ElboGraph g;
  const double invT = 1.0 / static_cast<double>(fp.T);
  g.recon = scale(mse(stopgrad(fp.b), fp.bhat), 0.5);
  g.kl_v = scale(sum(gaussian_kl_elem(fp.mu_v, fp.logvar_v, fp.prior_mu_v, fp.prior_logvar_v)),
                 invT);
  g.kl_c = scale(sum(gaussian_kl_elem(fp.mu_c, fp.logvar_c, fp.prior_mu_c, fp.prior_logvar_c)),
                 invT);
  return g;
}

// MSE between vhat (detached target) and the action decoder output.
inline Var aux_action_recon(const Var& vhat, const Var& vprime) {
  return ad::mse(ad::stopgrad(vhat), vprime);
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::ArrayXd e = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

inline PosteriorMatrix classify(const Var& logits) {
  return PosteriorMatrix(softmax_rows(logits->val));
}

// ---- checkpoint container ----
// "HALC" magic, u32 version, u64 json length + json payload (opaque to
// this module), u32 tensor count, then per tensor: u32 name length,
// name bytes, u32 rows, u32 cols, float64 LE row-major data.

inline void save_checkpoint(const std::filesystem::path& path, const HalModel& model,
                            const std::string& json_payload) {
  std::ofstream out(path, std::ios::binary);
  core::require(out.good(), "cannot open for writing: " + path.string());
  out.write("HALC", 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t jlen = json_payload.size();
  out.write(reinterpret_cast<const char*>(&jlen), 8);
  out.write(json_payload.data(), static_cast<std::streamsize>(jlen));
  const std::uint32_t count = static_cast<std::uint32_t>(model.params.items.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, var] : model.params.items) {
    const std::uint32_t nlen = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&nlen), 4);
    out.write(name.data(), nlen);
    const std::uint32_t rows = static_cast<std::uint32_t>(var->val.rows());
    const std::uint32_t cols = static_cast<std::uint32_t>(var->val.cols());
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    for (std::uint32_t r = 0; r < rows; ++r) {
      Eigen::RowVectorXd rowbuf = var->val.row(r);
      out.write(reinterpret_cast<const char*>(rowbuf.data()),
                static_cast<std::streamsize>(cols * sizeof(double)));
    }
  }
  core::require(out.good(), "short write: " + path.string());
}

struct CheckpointData {
  std::string json_payload;
  std::map<std::string, Matrix> tensors;
};

inline CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  core::require(in.good(), "cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  core::require(in.gcount() == 4 && std::memcmp(magic, "HALC", 4) == 0,
                "not a HAL checkpoint: " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  core::require(version == 1, "unsupported checkpoint version");
  std::uint64_t jlen = 0;
  in.read(reinterpret_cast<char*>(&jlen), 8);
  CheckpointData data;
  data.json_payload.resize(jlen);
  in.read(data.json_payload.data(), static_cast<std::streamsize>(jlen));
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t nlen = 0;
    in.read(reinterpret_cast<char*>(&nlen), 4);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    Matrix m(rows, cols);
    Eigen::RowVectorXd rowbuf(cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      in.read(reinterpret_cast<char*>(rowbuf.data()),
              static_cast<std::streamsize>(cols * sizeof(double)));
      m.row(r) = rowbuf;
    }
    core::require(in.good(), "truncated checkpoint: " + path.string());
    data.tensors.emplace(std::move(name), std::move(m));
  }
  return data;
}

inline void restore_params(HalModel& model, const std::map<std::string, Matrix>& tensors) {
  for (auto& [name, var] : model.params.items) {
    auto it = tensors.find(name);
    core::require(it != tensors.end(), "checkpoint missing tensor: " + name);
    core::require(it->second.rows() == var->val.rows() && it->second.cols() == var->val.cols(),
                  "checkpoint tensor shape mismatch: " + name);
    var->val = it->second;
  }
}

}  // namespace hal::net
