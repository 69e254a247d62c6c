// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <functional>
#include <string>
#include <vector>

#include "dcdm/nn/layers.hpp"
#include "dcdm/nn/param.hpp"
#include "dcdm/tensor.hpp"

namespace dcdm {

/// d x N token representation; columns are tokens, grouped by image.
template <class S>
struct TokenMatrix {
  Mat<S> Z;
  int d = 0;
  int N = 0;
  int tokens_per_image = 0;
  int batch = 0;
};

/// Heads of the subspace self-attention: K orthonormal-column bases plus the
/// codebook precision and attention coefficient.
template <class S>
struct SubspaceBank {
  std::vector<Parameter<S>> U;  // each (d, d/K)
  int K = 0;
  int d = 0;
  double eps_cb = 0.5;
  double p_coef = 0;  // numerator of the p/(N eps^2) coefficient

  void init(const std::string& name, int dim, int heads, double eps, double pcoef, Rng& rng) {
    if (heads < 1 || dim % heads != 0)
      throw ConfigError("SubspaceBank: K must divide d (d=" + std::to_string(dim) +
                        ", K=" + std::to_string(heads) + ")");
    if (eps <= 0) throw ConfigError("SubspaceBank: eps_cb must be positive");
    K = heads;
    d = dim;
    eps_cb = eps;
    p_coef = pcoef;
    const int m = dim / heads;
    U.resize(static_cast<std::size_t>(heads));
    for (int k = 0; k < heads; ++k) {
      auto& p = U[static_cast<std::size_t>(k)];
      p.setup(name + ".U" + std::to_string(k + 1),
              {static_cast<std::size_t>(dim), static_cast<std::size_t>(m)});
      Mat<S> A(dim, m);
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < dim; ++i) A(i, j) = static_cast<S>(rng.gaussian());
      Eigen::HouseholderQR<Mat<S>> qr(A);
      Mat<S> Q = qr.householderQ() * Mat<S>::Identity(dim, m);
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < dim; ++i)
          p.value[static_cast<std::size_t>(i * m + j)] = Q(i, j);
    }
  }

  Mat<S> head(int k) const {
    const auto& p = U[static_cast<std::size_t>(k)];
    const int m = d / K;
    return Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
               p.value.data(), d, m)
        .eval();
  }

  void set_head(int k, const Mat<S>& Uk) {
    auto& p = U[static_cast<std::size_t>(k)];
    const int m = d / K;
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < d; ++i)
        p.value[static_cast<std::size_t>(i * m + j)] = Uk(i, j);
  }

  double coefficient(int Ntokens) const {
    return p_coef / (static_cast<double>(Ntokens) * eps_cb * eps_cb);
  }

  ParamRefs<S> params() {
    ParamRefs<S> ps;
    for (auto& p : U) ps.push_back(&p);
    return ps;
  }
};

/// R(Z) = 1/2 log det(I + n/(N eps^2) Z^T Z), evaluated on the smaller Gram
/// side through a Cholesky factorization (jitter retry on failure).
template <class S>
double coding_rate(const Mat<S>& Z, double eps_cb, double n_dim) {
  if (eps_cb <= 0) throw DomainError("coding_rate: eps_cb must be positive");
  if (!Z.allFinite()) throw DomainError("coding_rate: non-finite token matrix");
  const Eigen::Index d = Z.rows(), N = Z.cols();
  if (N == 0 || d == 0) return 0.0;
  const double c = n_dim / (static_cast<double>(N) * eps_cb * eps_cb);
  Mat<double> Zd = Z.template cast<double>();
  Mat<double> G;
  if (d <= N)
    G = Zd * Zd.transpose();
  else
    G = Zd.transpose() * Zd;
  const Eigen::Index m = G.rows();
  Mat<double> M = Mat<double>::Identity(m, m) + c * G;
  Eigen::LLT<Mat<double>> llt(M);
  if (llt.info() != Eigen::Success) {
    M.diagonal().array() += 1e-9;
    llt.compute(M);
    if (llt.info() != Eigen::Success) throw NumericError("coding_rate: factorization failed");
  }
  double logdet = 0;
  for (Eigen::Index i = 0; i < m; ++i) logdet += std::log(llt.matrixL()(i, i));
  return logdet;  // 1/2 * log det via sum of log diag of L
}

/// R^c(Z | U) = sum_k R(U_k^T Z) with the per-head ambient dimension d/K.
template <class S>
double conditional_coding_rate(const Mat<S>& Z, const SubspaceBank<S>& bank) {
  if (Z.rows() != bank.d)
    throw ConfigError("conditional_coding_rate: token dim " + std::to_string(Z.rows()) +
                      " does not match bank dim " + std::to_string(bank.d));
  const double n_head = static_cast<double>(bank.d) / bank.K;
  double total = 0;
  for (int k = 0; k < bank.K; ++k) {
    Mat<S> P = bank.head(k).transpose() * Z;
    total += coding_rate(P, bank.eps_cb, n_head);
  }
  return total;
}

namespace detail {

/// Column-wise softmax with max subtraction.
template <class S>
Mat<S> softmax_cols(const Mat<S>& A) {
  Mat<S> out(A.rows(), A.cols());
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    const S mx = A.col(j).maxCoeff();
    Vec<S> e = (A.col(j).array() - mx).exp();
    out.col(j) = e / e.sum();
  }
  return out;
}

/// dA for column-wise softmax: dA_j = S_j .* (dS_j - <S_j, dS_j>).
template <class S>
Mat<S> softmax_cols_grad(const Mat<S>& soft, const Mat<S>& dsoft) {
  Mat<S> dA(soft.rows(), soft.cols());
  for (Eigen::Index j = 0; j < soft.cols(); ++j) {
    const S dot = soft.col(j).dot(dsoft.col(j));
    dA.col(j) = soft.col(j).array() * (dsoft.col(j).array() - dot);
  }
  return dA;
}

}  // namespace detail

template <class S>
struct MssaCtx {
  std::vector<Mat<S>> P;     // per head: U_k^T Z
  std::vector<Mat<S>> soft;  // per head: softmax((U_k^T Z)^T (U_k^T Z))
  Mat<S> Z;
  double kappa = 0;
};

/// Eq: MSSA(Z|U) = p/(N eps^2) [U_1..U_K] stack_k (U_k^T Z) softmax((U_k^T Z)^T (U_k^T Z))
template <class S>
Mat<S> mssa(const Mat<S>& Z, const SubspaceBank<S>& bank, MssaCtx<S>* ctx = nullptr) {
  const double kappa = bank.coefficient(static_cast<int>(Z.cols()));
  Mat<S> out = Mat<S>::Zero(Z.rows(), Z.cols());
  if (ctx) {
    ctx->P.resize(static_cast<std::size_t>(bank.K));
    ctx->soft.resize(static_cast<std::size_t>(bank.K));
    ctx->Z = Z;
    ctx->kappa = kappa;
  }
  for (int k = 0; k < bank.K; ++k) {
    Mat<S> Uk = bank.head(k);
    Mat<S> P = Uk.transpose() * Z;
    Mat<S> A = P.transpose() * P;
    Mat<S> soft = detail::softmax_cols(A);
    Mat<S> H = P * soft;
    out.noalias() += Uk * H;
    if (ctx) {
      ctx->P[static_cast<std::size_t>(k)] = std::move(P);
      ctx->soft[static_cast<std::size_t>(k)] = std::move(soft);
    }
  }
  return out * static_cast<S>(kappa);
}

/// Backward of mssa wrt Z; accumulates bank gradients.
template <class S>
Mat<S> mssa_backward(const Mat<S>& G, SubspaceBank<S>& bank, const MssaCtx<S>& ctx) {
  const S kappa = static_cast<S>(ctx.kappa);
  Mat<S> dZ = Mat<S>::Zero(ctx.Z.rows(), ctx.Z.cols());
  const int m = bank.d / bank.K;
  for (int k = 0; k < bank.K; ++k) {
    const Mat<S>& P = ctx.P[static_cast<std::size_t>(k)];
    const Mat<S>& soft = ctx.soft[static_cast<std::size_t>(k)];
    Mat<S> Uk = bank.head(k);
    Mat<S> H = P * soft;
    Mat<S> dH = kappa * (Uk.transpose() * G);
    Mat<S> dUk = kappa * (G * H.transpose());
    Mat<S> dP = dH * soft.transpose();
    Mat<S> dsoft = P.transpose() * dH;
    Mat<S> dA = detail::softmax_cols_grad(soft, dsoft);
    dP.noalias() += P * (dA + dA.transpose());
    dZ.noalias() += Uk * dP;
    dUk.noalias() += ctx.Z * dP.transpose();
    auto& up = bank.U[static_cast<std::size_t>(k)];
    if (!up.frozen) {
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < bank.d; ++i)
          up.grad[static_cast<std::size_t>(i * m + j)] += dUk(i, j);
    }
  }
  return dZ;
}

/// Z_{l+1/2} = (1 - eta k) Z + eta k MSSA(Z), k = p/(N eps^2).
template <class S>
Mat<S> attention_halfstep(const Mat<S>& Z, const SubspaceBank<S>& bank, double eta) {
  if (eta < 0) throw DomainError("attention_halfstep: eta must be non-negative");
  const double kappa = bank.coefficient(static_cast<int>(Z.cols()));
  Mat<S> M = mssa(Z, bank);
  return static_cast<S>(1.0 - eta * kappa) * Z + static_cast<S>(eta * kappa) * M;
}

/// Singular value soft-thresholding: prox of tau * nuclear norm.
template <class S>
Mat<S> svt(const Mat<S>& M, double tau) {
  if (tau < 0) throw DomainError("svt: tau must be non-negative");
  if (tau == 0) return M;
  Eigen::JacobiSVD<Mat<S>> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("svt: SVD failed");
  Vec<S> sv = svd.singularValues();
  for (Eigen::Index i = 0; i < sv.size(); ++i) sv[i] = std::max(S(0), sv[i] - static_cast<S>(tau));
  return svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
}

/// Elementwise shrinkage: prox of tau * l1 norm.
template <class S>
Mat<S> soft_threshold(const Mat<S>& M, double tau) {
  if (tau < 0) throw DomainError("soft_threshold: tau must be non-negative");
  return M.unaryExpr([tau](S v) {
    const double a = std::abs(static_cast<double>(v)) - tau;
    return a > 0 ? static_cast<S>(v > 0 ? a : -a) : S(0);
  });
}

struct AdmmConfig {
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double rho = 1.0;
  double eta = 1.0;
  int iters = 1;

  void validate() const {
    if (lambda1 <= 0 || lambda2 <= 0 || rho <= 0 || eta <= 0 || iters < 1)
      throw ConfigError("AdmmConfig: all parameters must be positive");
  }
};

template <class S>
struct AdmmResult {
  Mat<S> L, Ssp, Z;
  std::vector<double> residuals;  // ||Z - L - S||_F per iteration
};

/// Classical solver for the dictionary problem: alternating prox updates for
/// L and S, then the linearized quadratic update for Z with
/// F(Z) = 1/2 ||Z_half - D Z||^2. Reference oracle for the unrolled blocks.
template <class S>
AdmmResult<S> admm_oracle(const Mat<S>& Z_half, const Mat<S>& D, const AdmmConfig& cfg) {
  cfg.validate();
  AdmmResult<S> r;
  r.L = Mat<S>::Zero(Z_half.rows(), Z_half.cols());
  r.Ssp = Mat<S>::Zero(Z_half.rows(), Z_half.cols());
  r.Z = Z_half;
  const double step = 1.0 / (cfg.rho + 1.0 / cfg.eta);
  for (int it = 0; it < cfg.iters; ++it) {
    r.L = svt<S>(Z_half - r.Ssp, cfg.lambda1 / cfg.rho);
    r.Ssp = soft_threshold<S>(Z_half - r.L, cfg.lambda2 / cfg.rho);
    Mat<S> V = r.L + r.Ssp;
    Mat<S> grad = D.transpose() * (D * V - Z_half);
    r.Z = V - static_cast<S>(step) * grad;
    const double resid = (r.Z - r.L - r.Ssp).norm();
    r.residuals.push_back(resid);
    if (!(resid < 1e6))
      throw NumericError("admm_oracle: diverged at iteration " + std::to_string(it) +
                         " (residual " + std::to_string(resid) + ")");
  }
  return r;
}

/// One unrolled layer: subspace-attention half-step, then the three learned
/// proximal-style updates with the global dictionary.
template <class S>
struct NtBlock {
  FFN<S> opL;     // L = H_theta(Z_half - S_prev)
  FFN<S> opS;     // S = Gamma_theta([Z_half; L])
  FFN<S> opZ;     // Z = Phi_theta([L + S; D^T Z_half])
  Parameter<S> dict;  // (d, d), near-orthogonal at init
  Parameter<S> eta;   // scalar attention step size

  struct Ctx {
    MssaCtx<S> mssa;
    Mat<S> Z_in, M, Z_half, L, LS;
    typename FFN<S>::Ctx l, s, z;
  };

  void init(const std::string& name, int d, Rng& rng) {
    opL.init(name + ".opL", d, d, rng);
    opS.init(name + ".opS", 2 * d, d, rng);
    opZ.init(name + ".opZ", 2 * d, d, rng);
    dict.setup(name + ".dict", {static_cast<std::size_t>(d), static_cast<std::size_t>(d)});
    Mat<S> A(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < d; ++i) A(i, j) = static_cast<S>(rng.gaussian());
    Eigen::HouseholderQR<Mat<S>> qr(A);
    Mat<S> Q = qr.householderQ() * Mat<S>::Identity(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < d; ++i)
        dict.value[static_cast<std::size_t>(i * d + j)] = Q(i, j);
    eta.setup(name + ".eta", {1});
    eta.value[0] = S(0.5);
  }

  Mat<S> dict_mat() const {
    const int d = static_cast<int>(dict.value.dim(0));
    return Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
               dict.value.data(), d, d)
        .eval();
  }

  Mat<S> forward(const Mat<S>& Z, const SubspaceBank<S>& bank, Ctx* ctx) const {
    const double etav = static_cast<double>(eta.value[0]);
    const double kappa = bank.coefficient(static_cast<int>(Z.cols()));
    Mat<S> M = mssa(Z, bank, ctx ? &ctx->mssa : nullptr);
    Mat<S> Z_half = static_cast<S>(1.0 - etav * kappa) * Z + static_cast<S>(etav * kappa) * M;

    Mat<S> D = dict_mat();
    // S_prev = 0 at block entry.
    Mat<S> L = opL.forward(Z_half, ctx ? &ctx->l : nullptr);
    Mat<S> catSL = concat_rows(Z_half, L);
    Mat<S> Ssp = opS.forward(catSL, ctx ? &ctx->s : nullptr);
    Mat<S> LS = L + Ssp;
    Mat<S> DtZ = D.transpose() * Z_half;
    Mat<S> catZ = concat_rows(LS, DtZ);
    Mat<S> Z_next = opZ.forward(catZ, ctx ? &ctx->z : nullptr);
    if (ctx) {
      ctx->Z_in = Z;
      ctx->M = std::move(M);
      ctx->Z_half = std::move(Z_half);
      ctx->L = std::move(L);
      ctx->LS = std::move(LS);
    }
    return Z_next;
  }

  Mat<S> backward(const Mat<S>& G, SubspaceBank<S>& bank, Ctx& ctx) {
    const int d = static_cast<int>(dict.value.dim(0));
    Mat<S> D = dict_mat();
    Mat<S> dcatZ = opZ.backward(G, ctx.z);
    Mat<S> dLS = dcatZ.topRows(d);
    Mat<S> dDtZ = dcatZ.bottomRows(d);

    Mat<S> dZ_half = D * dDtZ;
    if (!dict.frozen) {
      Mat<S> dD = ctx.Z_half * dDtZ.transpose();
      for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < d; ++i)
          dict.grad[static_cast<std::size_t>(i * d + j)] += dD(i, j);
    }

    Mat<S> dL = dLS;
    Mat<S> dS = dLS;
    Mat<S> dcatSL = opS.backward(dS, ctx.s);
    dZ_half += dcatSL.topRows(d);
    dL += dcatSL.bottomRows(d);
    dZ_half += opL.backward(dL, ctx.l);

    // Half-step backward: Z_half = (1 - eta k) Z + eta k M(Z).
    const double etav = static_cast<double>(eta.value[0]);
    const double kappa = ctx.mssa.kappa;
    if (!eta.frozen) {
      const double de =
          kappa * (dZ_half.array() * (ctx.M - ctx.Z_in).array()).template cast<double>().sum();
      eta.grad[0] += static_cast<S>(de);
    }
    Mat<S> dM = static_cast<S>(etav * kappa) * dZ_half;
    Mat<S> dZ = static_cast<S>(1.0 - etav * kappa) * dZ_half;
    dZ += mssa_backward(dM, bank, ctx.mssa);
    return dZ;
  }

  /// The same dataflow with caller-supplied operators; used to check that the
  /// exact proximal updates reproduce one classical ADMM iteration.
  struct Ops {
    std::function<Mat<S>(const Mat<S>&)> opL;                  // Z_half - S_prev
    std::function<Mat<S>(const Mat<S>&, const Mat<S>&)> opS;   // (Z_half, L)
    std::function<Mat<S>(const Mat<S>&, const Mat<S>&)> opZ;   // (L + S, D^T Z_half)
  };

  Mat<S> forward_with_ops(const Mat<S>& Z, const SubspaceBank<S>& bank, const Ops& ops,
                          Mat<S>* L_out = nullptr, Mat<S>* S_out = nullptr) const {
    Mat<S> Z_half = attention_halfstep(Z, bank, static_cast<double>(eta.value[0]));
    Mat<S> D = dict_mat();
    Mat<S> L = ops.opL(Z_half);  // S_prev = 0
    Mat<S> Ssp = ops.opS(Z_half, L);
    Mat<S> DtZ = D.transpose() * Z_half;
    Mat<S> Z_next = ops.opZ(L + Ssp, DtZ);
    if (L_out) *L_out = std::move(L);
    if (S_out) *S_out = std::move(Ssp);
    return Z_next;
  }

  static Mat<S> concat_rows(const Mat<S>& a, const Mat<S>& b) {
    Mat<S> out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
  }

  ParamRefs<S> params() {
    ParamRefs<S> ps = opL.params();
    for (auto* p : opS.params()) ps.push_back(p);
    for (auto* p : opZ.params()) ps.push_back(p);
    ps.push_back(&dict);
    ps.push_back(&eta);
    return ps;
  }
};

struct NtcConfig {
  int in_channels = 1;
  int d = 64;         // token dimension
  int K = 4;          // attention heads
  int L = 2;          // NT blocks
  int p = 8;          // patch size
  int n_classes = 5;  // |drf_levels|
  double eps_cb = 0.5;
  double p_coef = 0;  // 0 -> defaults to d

  void validate() const {
    if (d < 4 || d % 4 != 0) throw ConfigError("NtcConfig: d must be a positive multiple of 4");
    if (K < 1 || d % K != 0) throw ConfigError("NtcConfig: K must divide d");
    if (L < 1) throw ConfigError("NtcConfig: L must be >= 1");
    if (p < 1) throw ConfigError("NtcConfig: p must be >= 1");
    if (n_classes < 2) throw ConfigError("NtcConfig: n_classes must be >= 2");
    if (eps_cb <= 0) throw ConfigError("NtcConfig: eps_cb must be positive");
  }
};

/// Low-rank/sparse split carried alongside Z for the objective diagnostic.
template <class S>
struct LowRankSparseSplit {
  Mat<S> L, Ssp;
};

/// Nuclear norm (sum of singular values).
template <class S>
double nuclear_norm(const Mat<S>& M) {
  Eigen::JacobiSVD<Mat<S>> svd(M);
  return svd.singularValues().template cast<double>().sum();
}

template <class S>
double l1_norm(const Mat<S>& M) {
  return M.array().abs().template cast<double>().sum();
}

/// Eq objective value R(Z) - R^c(Z;U) - lambda1 ||L||_* - lambda2 ||S||_1,
/// reported as a diagnostic scalar (training uses cross-entropy).
template <class S>
double ntc_objective(const Mat<S>& Z, const LowRankSparseSplit<S>& split,
                     const SubspaceBank<S>& bank, double lambda1, double lambda2) {
  const double r = coding_rate(Z, bank.eps_cb, static_cast<double>(bank.d));
  const double rc = conditional_coding_rate(Z, bank);
  return r - rc - lambda1 * nuclear_norm(split.L) - lambda2 * l1_norm(split.Ssp);
}

struct RankSparsity {
  double stable_rank = 0;
  double zero_fraction = 0;
  std::vector<double> singular_values;
};

/// Stable rank ||Z||_F^2 / sigma_max^2 and near-zero entry share.
template <class S>
RankSparsity rank_sparsity_diagnostics(const Mat<S>& Z) {
  if (!Z.allFinite()) throw DomainError("rank_sparsity_diagnostics: non-finite input");
  RankSparsity out;
  Eigen::JacobiSVD<Mat<S>> svd(Z);
  Vec<S> sv = svd.singularValues();
  out.singular_values.resize(static_cast<std::size_t>(sv.size()));
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    out.singular_values[static_cast<std::size_t>(i)] = static_cast<double>(sv[i]);
  const double smax = sv.size() > 0 ? static_cast<double>(sv[0]) : 0.0;
  const double fro2 = Z.squaredNorm();
  out.stable_rank = smax > 0 ? fro2 / (smax * smax) : 0.0;
  const double scale = Z.array().abs().maxCoeff();
  if (scale > 0) {
    const double thresh = 1e-6 * scale;
    std::size_t zeros = 0;
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
      for (Eigen::Index i = 0; i < Z.rows(); ++i)
        if (std::abs(static_cast<double>(Z(i, j))) < thresh) ++zeros;
    out.zero_fraction = static_cast<double>(zeros) / static_cast<double>(Z.size());
  } else {
    out.zero_fraction = 1.0;
  }
  return out;
}

/// Mean cross-entropy over the batch with logits (n_classes x B).
/// `dlogits`, when given, receives (softmax - onehot)/B.
template <class S>
double cross_entropy(const Mat<S>& logits, const std::vector<int>& labels, Mat<S>* dlogits) {
  const Eigen::Index K = logits.rows(), B = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != B)
    throw DomainError("cross_entropy: one label per column required");
  for (int y : labels)
    if (y < 0 || y >= K)
      throw DomainError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(K) + ")");
  if (dlogits) dlogits->resize(K, B);
  double loss = 0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const S mx = logits.col(b).maxCoeff();
    Vec<double> e = (logits.col(b).array() - mx).template cast<double>().exp();
    const double sum = e.sum();
    const double logp =
        static_cast<double>(logits(labels[static_cast<std::size_t>(b)], b) - mx) - std::log(sum);
    loss -= logp;
    if (dlogits) {
      for (Eigen::Index k = 0; k < K; ++k)
        (*dlogits)(k, b) = static_cast<S>(e[k] / sum / static_cast<double>(B));
      (*dlogits)(labels[static_cast<std::size_t>(b)], b) -= static_cast<S>(1.0 / B);
    }
  }
  return loss / static_cast<double>(B);
}

template <class S>
Mat<S> softmax_cols_public(const Mat<S>& logits) {
  return detail::softmax_cols(logits);
}

/// Nuclear Transformer Constraint: patch embedding, L unrolled NT blocks,
/// and a classification head over mean-pooled tokens.
template <class S>
class Ntc {
public:
  Ntc() = default;

  Ntc(const NtcConfig& cfg, Rng rng) : cfg_(cfg) {
    cfg.validate();
    if (cfg_.p_coef <= 0) cfg_.p_coef = static_cast<double>(cfg.d);
    patch_.init("ntc.patch_embed", cfg.in_channels, cfg.d, cfg.p, cfg.p, 0, rng);
    bank_.init("ntc.bank", cfg.d, cfg.K, cfg.eps_cb, cfg_.p_coef, rng);
    blocks_.resize(static_cast<std::size_t>(cfg.L));
    for (int l = 0; l < cfg.L; ++l)
      blocks_[static_cast<std::size_t>(l)].init("ntc.block" + std::to_string(l + 1), cfg.d, rng);
    classifier_.init_hidden("ntc.classifier", cfg.d, cfg.d / 4, cfg.n_classes, rng);
  }

  const NtcConfig& config() const { return cfg_; }
  SubspaceBank<S>& bank() { return bank_; }
  const SubspaceBank<S>& bank() const { return bank_; }
  std::vector<NtBlock<S>>& blocks() { return blocks_; }

  struct Ctx {
    typename Conv2d<S>::Ctx patch;
    std::vector<typename NtBlock<S>::Ctx> blocks;
    typename FFN<S>::Ctx cls;
    std::vector<Mat<S>> layer_tokens;  // Z^1 ... Z^L for diagnostics
    int tokens_per_image = 0;
    int batch = 0;
    std::size_t hp = 0, wp = 0;
  };

  struct Output {
    TokenMatrix<S> tokens;
    Mat<S> pooled;  // (d x B) mean over each image's tokens
    Mat<S> logits;  // (n_classes x B)
  };

  /// Non-overlapping p x p patches, each mapped to a d-vector; token columns
  /// are grouped per image (N = h w B / p^2 in total).
  Mat<S> patch_tokens(const Tensor<S>& x, typename Conv2d<S>::Ctx* conv_ctx = nullptr,
                      std::size_t* hp_out = nullptr, std::size_t* wp_out = nullptr) const {
    const std::size_t B = x.dim(0), h = x.dim(2), w = x.dim(3);
    if (h % static_cast<std::size_t>(cfg_.p) != 0 || w % static_cast<std::size_t>(cfg_.p) != 0)
      throw ConfigError("Ntc: patch size " + std::to_string(cfg_.p) +
                        " must divide image dims " + std::to_string(h) + "x" + std::to_string(w));
    Tensor<S> emb = patch_.forward(x, conv_ctx);  // (B, d, h/p, w/p)
    const std::size_t hp = emb.dim(2), wp = emb.dim(3);
    if (hp_out) *hp_out = hp;
    if (wp_out) *wp_out = wp;
    Mat<S> Z(cfg_.d, static_cast<Eigen::Index>(B * hp * wp));
    for (std::size_t b = 0; b < B; ++b)
      for (int c = 0; c < cfg_.d; ++c)
        for (std::size_t i = 0; i < hp * wp; ++i)
          Z(c, static_cast<Eigen::Index>(b * hp * wp + i)) =
              emb[((b * static_cast<std::size_t>(cfg_.d) + static_cast<std::size_t>(c)) * hp * wp) + i];
    return Z;
  }

  Output forward(const Tensor<S>& x, Ctx* ctx) const {
    const std::size_t B = x.dim(0);
    std::size_t hp = 0, wp = 0;
    Mat<S> Z = patch_tokens(x, ctx ? &ctx->patch : nullptr, &hp, &wp);
    const int per = static_cast<int>(hp * wp);
    const int N = static_cast<int>(B) * per;

    if (ctx) {
      ctx->blocks.resize(blocks_.size());
      ctx->layer_tokens.clear();
      ctx->tokens_per_image = per;
      ctx->batch = static_cast<int>(B);
      ctx->hp = hp;
      ctx->wp = wp;
    }
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      Z = blocks_[l].forward(Z, bank_, ctx ? &ctx->blocks[l] : nullptr);
      if (ctx) ctx->layer_tokens.push_back(Z);
    }

    Output out;
    out.tokens.Z = Z;
    out.tokens.d = cfg_.d;
    out.tokens.N = N;
    out.tokens.tokens_per_image = per;
    out.tokens.batch = static_cast<int>(B);
    out.pooled = Mat<S>::Zero(cfg_.d, static_cast<Eigen::Index>(B));
    for (std::size_t b = 0; b < B; ++b) {
      for (int i = 0; i < per; ++i)
        out.pooled.col(static_cast<Eigen::Index>(b)) +=
            Z.col(static_cast<Eigen::Index>(b) * per + i);
      out.pooled.col(static_cast<Eigen::Index>(b)) /= static_cast<S>(per);
    }
    out.logits = classifier_.forward(out.pooled, ctx ? &ctx->cls : nullptr);
    return out;
  }

  /// Backward from (dlogits, dZ_tokens, dpooled); any of them may be empty.
  void backward(const Mat<S>& dlogits, const Mat<S>& dtokens, const Mat<S>& dpooled_extra,
                Ctx& ctx) {
    const int per = ctx.tokens_per_image;
    const int B = ctx.batch;
    Mat<S> dpooled = Mat<S>::Zero(cfg_.d, B);
    if (dlogits.size() > 0) dpooled = classifier_.backward(dlogits, ctx.cls);
    if (dpooled_extra.size() > 0) dpooled += dpooled_extra;

    Mat<S> dZ = Mat<S>::Zero(cfg_.d, static_cast<Eigen::Index>(B) * per);
    if (dtokens.size() > 0) dZ = dtokens;
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < per; ++i)
        dZ.col(static_cast<Eigen::Index>(b) * per + i) +=
            dpooled.col(b) / static_cast<S>(per);

    for (std::size_t l = blocks_.size(); l-- > 0;)
      dZ = blocks_[l].backward(dZ, bank_, ctx.blocks[l]);

    // Repack token grads onto the patch-embedding output grid.
    Tensor<S> demb({static_cast<std::size_t>(B), static_cast<std::size_t>(cfg_.d), ctx.hp, ctx.wp});
    for (std::size_t b = 0; b < static_cast<std::size_t>(B); ++b)
      for (int c = 0; c < cfg_.d; ++c)
        for (std::size_t i = 0; i < ctx.hp * ctx.wp; ++i)
          demb[((b * static_cast<std::size_t>(cfg_.d) + static_cast<std::size_t>(c)) * ctx.hp * ctx.wp) + i] =
              dZ(c, static_cast<Eigen::Index>(b * ctx.hp * ctx.wp + i));
    patch_.backward(demb, ctx.patch);
  }

  ParamRefs<S> params() {
    ParamRefs<S> ps = patch_.params();
    for (auto* p : bank_.params()) ps.push_back(p);
    for (auto& b : blocks_)
      for (auto* p : b.params()) ps.push_back(p);
    for (auto* p : classifier_.params()) ps.push_back(p);
    return ps;
  }

private:
  NtcConfig cfg_;
  Conv2d<S> patch_;
  SubspaceBank<S> bank_;
  std::vector<NtBlock<S>> blocks_;
  FFN<S> classifier_;
};

/// Cross-entropy training objective; accumulates gradients for all NTC
/// parameters and returns the loss.
template <class S>
double ntc_train_loss(Ntc<S>& model, const Tensor<S>& x, const std::vector<int>& labels) {
  typename Ntc<S>::Ctx ctx;
  auto out = model.forward(x, &ctx);
  Mat<S> dlogits;
  const double loss = cross_entropy(out.logits, labels, &dlogits);
  model.backward(dlogits, Mat<S>(), Mat<S>(), ctx);
  return loss;
}

}  // namespace dcdm
