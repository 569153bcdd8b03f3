#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "nsds/decomposition.hpp"
#include "nsds/matrix.hpp"
#include "nsds/numerical_vulnerability.hpp"

namespace nsds {

struct SEOptions {
    // Fraction of the singular-value sum the retained prefix must reach.
    double energy = 0.9;
    // Singular values at or below noise_floor * sigma_max are discarded
    // before truncation.
    double noise_floor = 1e-12;
    // Also pass writing-density factors through log(1 + relu(x)).
    bool wd_sublinear = false;
};

// Thin SVD W = U diag(sigma) V^T cut to the shortest prefix whose
// singular-value sum reaches `energy` of the total.
struct TruncatedSVD {
    Matrix u;                   // m x k
    std::vector<double> sigma;  // k, non-increasing
    Matrix v;                   // n x k
    double energy_kept = 1.0;

    std::size_t k() const { return sigma.size(); }
    // U diag(sigma) V^T
    Matrix reconstruct() const;
};

// `label` only feeds diagnostics.
TruncatedSVD truncated_svd(const Matrix& w, double energy = 0.9, double noise_floor = 1e-12,
                           std::string_view label = {});

// Shannon entropy (natural log) of sigma / sum(sigma).
double spectral_entropy(std::span<const double> sigma);
// ||sigma||_1 * exp(H(sigma))
double base_se(std::span<const double> sigma);
// log(1 + max(x, 0))
double sublinear(double x);

// Detection specificity per retained component: sublinear(kurt(v_i)) for
// FFN_IN/FFN_GATE, sublinear(kurt(v_i) * kurt(u_i)) for QK.
std::vector<double> beta_ds(const TruncatedSVD& svd, ComponentKind kind);
// Writing density per retained component: ||Wu_trunc^T u_i||_1.
std::vector<double> beta_wd(const TruncatedSVD& svd, const Matrix& wu_trunc);

struct SEScore {
    double value = 0.0;
    ComponentKind kind = ComponentKind::qk;
    std::size_t layer = 0;
    std::size_t k_used = 0;
};

// Scores an SVD already in operator orientation (U on the output side,
// V on the input side).
SEScore role_se_from_svd(const TruncatedSVD& svd, ComponentKind kind, const Matrix& wu_trunc,
                         const SEOptions& options = {});

// `w` is in right-multiplication orientation (input dim x output dim), as
// produced by decompose_layer; the SVD is taken of its transpose so that V
// spans the input (read) side and U the output (write) side.
SEScore role_se(const Matrix& w, ComponentKind kind, const Matrix& wu_trunc, const SEOptions& options = {},
                std::string_view label = {});

// W_U rebuilt from its own truncated SVD; computed once per model.
Matrix truncate_unembedding(const Matrix& w_u, const SEOptions& options = {});

// QK and OV entries are means of per-head raw scores.
ComponentScores se_layer(const LayerComponents& lc, const Matrix& wu_trunc, const SEOptions& options = {});

}  // namespace nsds
