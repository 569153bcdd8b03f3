#include "nsds/structural_expressiveness.hpp"

#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "nsds/error.hpp"
#include "nsds/kernels.hpp"
#include "nsds/log.hpp"

namespace nsds {
namespace {

constexpr std::string_view kModule = "structural_expressiveness";

}  // namespace

Matrix TruncatedSVD::reconstruct() const {
    Eigen::MatrixXd us = u.eigen();
    for (std::size_t i = 0; i < k(); ++i) us.col(Eigen::Index(i)) *= sigma[i];
    Matrix out(u.rows(), v.rows());
    out.eigen().noalias() = us * v.eigen().transpose();
    return out;
}

TruncatedSVD truncated_svd(const Matrix& w, double energy, double noise_floor, std::string_view label) {
    if (w.empty()) fail(ErrorKind::validation, std::string(kModule), "SVD of an empty matrix");
    if (!(energy > 0.0 && energy <= 1.0)) {
        fail(ErrorKind::validation, std::string(kModule), "energy must lie in (0, 1], got " + std::to_string(energy));
    }
    if (!w.all_finite()) fail(ErrorKind::data, std::string(kModule), "non-finite entries in " + std::string(label));

    Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(w.eigen()), Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        fail(ErrorKind::numerical, std::string(kModule), "SVD did not converge for " + std::string(label));
    }
    const Eigen::VectorXd& s = svd.singularValues();
    const double sigma_max = s.size() > 0 ? s(0) : 0.0;

    std::size_t usable = 0;
    while (usable < std::size_t(s.size()) && s(Eigen::Index(usable)) > noise_floor * sigma_max) ++usable;

    TruncatedSVD out;
    std::size_t k = 1;
    if (usable == 0) {
        out.sigma = {0.0};
        out.energy_kept = 1.0;
    } else {
        double total = 0.0;
        for (std::size_t i = 0; i < usable; ++i) total += s(Eigen::Index(i));
        double cum = 0.0;
        for (k = 0; k < usable;) {
            cum += s(Eigen::Index(k));
            ++k;
            if (cum >= energy * total) break;
        }
        out.sigma.assign(s.data(), s.data() + k);
        out.energy_kept = cum / total;
    }
    out.u = Matrix::from_eigen(svd.matrixU().leftCols(Eigen::Index(k)));
    out.v = Matrix::from_eigen(svd.matrixV().leftCols(Eigen::Index(k)));
    log::debug("svd " + std::string(label) + " " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
               " k=" + std::to_string(k) + "/" + std::to_string(usable));
    return out;
}

double spectral_entropy(std::span<const double> sigma) {
    double total = 0.0;
    for (double s : sigma) {
        if (!(s >= 0.0) || !std::isfinite(s)) {
            fail(ErrorKind::validation, std::string(kModule), "singular values must be finite and non-negative");
        }
        total += s;
    }
    if (total <= 0.0) fail(ErrorKind::degenerate, std::string(kModule), "spectrum sums to zero");
    double h = 0.0;
    for (double s : sigma) {
        if (s == 0.0) continue;
        const double p = s / total;
        h -= p * std::log(p);
    }
    return h;
}

double base_se(std::span<const double> sigma) {
    const double h = spectral_entropy(sigma);
    double l1 = 0.0;
    for (double s : sigma) l1 += s;
    return l1 * std::exp(h);
}

double sublinear(double x) { return x > 0.0 ? std::log1p(x) : 0.0; }

namespace {

std::vector<double> column(const Matrix& m, std::size_t c) {
    std::vector<double> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
    return out;
}

}  // namespace

std::vector<double> beta_ds(const TruncatedSVD& svd, ComponentKind kind) {
    if (role(kind) != Role::detector) {
        fail(ErrorKind::role_misuse, std::string(kModule),
             "detection specificity requested for writer " + std::string(to_string(kind)));
    }
    std::vector<double> beta(svd.k());
    for (std::size_t i = 0; i < svd.k(); ++i) {
        double x = excess_kurtosis(column(svd.v, i));
        if (kind == ComponentKind::qk) x *= excess_kurtosis(column(svd.u, i));
        beta[i] = sublinear(x);
    }
    return beta;
}

std::vector<double> beta_wd(const TruncatedSVD& svd, const Matrix& wu_trunc) {
    if (svd.u.rows() != wu_trunc.rows()) {
        fail(ErrorKind::shape, std::string(kModule),
             "output singular vectors have length " + std::to_string(svd.u.rows()) + " but W_U has " +
                 std::to_string(wu_trunc.rows()) + " rows");
    }
    // Row i of the projection is (W_U^T u_i)^T.
    RowMajorXd projection = svd.u.eigen().transpose() * wu_trunc.eigen();
    const auto& k = kernels::active();
    std::vector<double> beta(svd.k());
    for (std::size_t i = 0; i < svd.k(); ++i) {
        beta[i] = k.abs_sum({projection.data() + i * std::size_t(projection.cols()), std::size_t(projection.cols())});
    }
    return beta;
}

SEScore role_se_from_svd(const TruncatedSVD& svd, ComponentKind kind, const Matrix& wu_trunc,
                         const SEOptions& options) {
    std::vector<double> beta;
    if (role(kind) == Role::detector) {
        beta = beta_ds(svd, kind);
    } else {
        beta = beta_wd(svd, wu_trunc);
        if (options.wd_sublinear)
            for (double& b : beta) b = sublinear(b);
    }
    std::vector<double> reweighted(svd.k());
    bool any_positive = false;
    for (std::size_t i = 0; i < svd.k(); ++i) {
        reweighted[i] = svd.sigma[i] * beta[i];
        any_positive = any_positive || reweighted[i] > 0.0;
    }
    SEScore score;
    score.kind = kind;
    score.k_used = svd.k();
    score.value = any_positive ? base_se(reweighted) : 0.0;
    return score;
}

SEScore role_se(const Matrix& w, ComponentKind kind, const Matrix& wu_trunc, const SEOptions& options,
                std::string_view label) {
    const TruncatedSVD svd = truncated_svd(w.transposed(), options.energy, options.noise_floor, label);
    return role_se_from_svd(svd, kind, wu_trunc, options);
}

Matrix truncate_unembedding(const Matrix& w_u, const SEOptions& options) {
    return truncated_svd(w_u, options.energy, options.noise_floor, "unembedding").reconstruct();
}

namespace {

double mean_se(const std::vector<Matrix>& heads, ComponentKind kind, const Matrix& wu_trunc,
               const SEOptions& options, std::size_t layer) {
    double sum = 0.0;
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const std::string label = "layer" + std::to_string(layer) + "." + std::string(to_string(kind)) + ".head" +
                                  std::to_string(h);
        sum += role_se(heads[h], kind, wu_trunc, options, label).value;
    }
    return sum / double(heads.size());
}

}  // namespace

ComponentScores se_layer(const LayerComponents& lc, const Matrix& wu_trunc, const SEOptions& options) {
    if (lc.qk_heads.empty() || lc.ov_heads.empty()) {
        fail(ErrorKind::validation, std::string(kModule), "layer has no attention heads");
    }
    const std::string prefix = "layer" + std::to_string(lc.layer_index) + ".";
    ComponentScores out;
    out[ComponentKind::qk] = mean_se(lc.qk_heads, ComponentKind::qk, wu_trunc, options, lc.layer_index);
    out[ComponentKind::ov] = mean_se(lc.ov_heads, ComponentKind::ov, wu_trunc, options, lc.layer_index);
    out[ComponentKind::ffn_in] = role_se(lc.ffn_in, ComponentKind::ffn_in, wu_trunc, options, prefix + "FFN_IN").value;
    out[ComponentKind::ffn_out] =
        role_se(lc.ffn_out, ComponentKind::ffn_out, wu_trunc, options, prefix + "FFN_OUT").value;
    if (lc.ffn_gate) {
        out[ComponentKind::ffn_gate] =
            role_se(*lc.ffn_gate, ComponentKind::ffn_gate, wu_trunc, options, prefix + "FFN_GATE").value;
    }
    return out;
}

}  // namespace nsds
