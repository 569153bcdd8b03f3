// Acceptance suite: one PASS/FAIL line per criterion, tolerances and time limits fixed below.
#include <Eigen/Eigenvalues>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "nsds/aggregation.hpp"
#include "nsds/allocation.hpp"
#include "nsds/baselines.hpp"
#include "nsds/cli.hpp"
#include "nsds/error.hpp"
#include "nsds/model_io.hpp"
#include "nsds/numerical_vulnerability.hpp"
#include "nsds/pipeline.hpp"
#include "nsds/quantizer.hpp"
#include "nsds/structural_expressiveness.hpp"
#include "nsds/synth.hpp"
#include "oracles.hpp"

using namespace nsds;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream notes;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (!notes.str().empty()) notes << "; ";
            notes << what;
            pass = false;
        }
    }
};

struct Criterion {
    int id;
    std::string name;
    double limit_seconds;
    std::function<void(Outcome&)> body;
};

ArchConfig fixture_config() {
    SynthShape s;
    s.num_layers = 8;
    s.d_model = 64;
    s.num_heads = 4;
    s.num_kv_heads = 4;
    s.d_head = 16;
    s.d_ffn = 256;
    return make_arch_config(s);
}

constexpr std::uint64_t kFixtureSeed = 7;

std::string set_text(const std::set<std::size_t>& s) {
    std::string out = "{";
    for (std::size_t v : s) out += (out.size() > 1 ? "," : "") + std::to_string(v);
    return out + "}";
}

std::set<std::size_t> top_k(std::span<const double> scores, std::size_t k, Direction d) {
    const auto r = rank_layers(scores, d);
    return {r.begin(), r.begin() + std::ptrdiff_t(k)};
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "nsds");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(int(argv.size()), argv.data(), out, err);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

ErrorKind container_error(const std::vector<std::uint8_t>& bytes) {
    try {
        parse_container(bytes);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::validation;
}

std::vector<std::uint8_t> framed(const std::string& header, std::size_t payload) {
    std::vector<std::uint8_t> out(8);
    for (int i = 0; i < 8; ++i) out[i] = std::uint8_t(std::uint64_t(header.size()) >> (8 * i));
    out.insert(out.end(), header.begin(), header.end());
    out.resize(out.size() + payload, 0);
    return out;
}

// ---------------------------------------------------------------------------------------------

void formula_constants(Outcome& o) {
    const ScoringOptions defaults;
    const SEOptions se;
    o.require(kDefaultEpsilon == 1e-12 && defaults.epsilon == 1e-12, "epsilon default");
    o.require(kMadScale == 1.4826, "MAD scale");
    o.require(se.energy == 0.9 && defaults.energy == 0.9, "SVD energy default");
    o.require(defaults.budget == 3.0, "budget default");
    o.require(num_4bit_layers(3.0, 32) == 16, "L4(3, 32) = 16");
    const std::vector<double> x{1, 2, 3, 4, 5};
    o.require(std::abs(mad_sigmoid(x)[4] - oracle::sigmoid(2.0 / (1.4826 + 1e-12))) < 1e-15,
              "MAD-sigmoid uses the pinned constants");
}

void kurtosis_oracle(Outcome& o) {
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<std::size_t> len(2, 10'000);
    std::uniform_int_distribution<int> family(0, 2);
    std::student_t_distribution<double> t(4.5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::normal_distribution<double> g;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> x(len(rng));
        const int f = family(rng);
        for (double& v : x) v = f == 0 ? g(rng) : f == 1 ? t(rng) : u(rng);
        worst = std::max(worst, oracle::rel_err(excess_kurtosis(x), oracle::excess_kurtosis(x)));
    }
    o.notes << "max rel err " << worst;
    o.require(worst <= 1e-10, "relative error above 1e-10");
    const std::vector<double> two{-1.5, 1.5};
    o.require(excess_kurtosis(two) == -2.0, "two-point vector is not exactly -2");
}

void svd_contract(Outcome& o) {
    std::mt19937_64 rng(3003);
    std::uniform_int_distribution<std::size_t> dim(1, 256);
    const std::array kinds{ComponentKind::qk, ComponentKind::ffn_in, ComponentKind::ffn_gate, ComponentKind::ov,
                           ComponentKind::ffn_out};
    double worst_residual = 0.0, worst_sign = 0.0;
    int energy_bad = 0, minimal_bad = 0;
    for (int i = 0; i < 500; ++i) {
        const std::size_t m = dim(rng), n = dim(rng);
        const std::size_t full = std::min(m, n);
        const std::size_t rank = 1 + std::uniform_int_distribution<std::size_t>(0, full - 1)(rng);
        const Matrix w = rank == full ? oracle::gaussian(m, n, rng) : oracle::low_rank(m, n, rank, rng);

        const TruncatedSVD s = truncated_svd(w);

        // Independent spectrum: square roots of the Gram matrix eigenvalues.
        const Eigen::MatrixXd a = w.eigen();
        const Eigen::MatrixXd gram = m >= n ? Eigen::MatrixXd(a.transpose() * a) : Eigen::MatrixXd(a * a.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
        std::vector<double> sigma;
        for (Eigen::Index j = eig.eigenvalues().size() - 1; j >= 0; --j)
            sigma.push_back(std::sqrt(std::max(0.0, eig.eigenvalues()[j])));
        const double total = std::accumulate(sigma.begin(), sigma.end(), 0.0);
        const double kept = std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0);
        const double tol = 1e-9 * total;
        if (kept < 0.9 * total - tol) ++energy_bad;
        double prefix = 0.0;
        for (std::size_t j = 0; j + 1 < s.k(); ++j) prefix += sigma[j];
        if (prefix >= 0.9 * total + tol) ++minimal_bad;

        // Residual of the retained subspace equals the discarded spectral energy.
        const double fro2 = a.squaredNorm();
        double kept2 = 0.0;
        for (double x : s.sigma) kept2 += x * x;
        const Eigen::MatrixXd r = a - Eigen::MatrixXd(s.reconstruct().eigen());
        worst_residual = std::max(worst_residual, std::abs(r.squaredNorm() - (fro2 - kept2)) / std::max(1.0, fro2));

        // Sign gauge: flip a random subset of (u_i, v_i) pairs.
        // Detector weights need singular vectors of length >= 2.
        const std::size_t offset = std::min(m, n) < 2 ? 3 : 0;
        const ComponentKind kind = kinds[offset + std::size_t(i) % (kinds.size() - offset)];
        const Matrix wt_svd_input = w.transposed();
        TruncatedSVD g = truncated_svd(wt_svd_input);
        const Matrix wu = truncate_unembedding(oracle::gaussian(g.u.rows(), 32, rng));
        const double before = role_se_from_svd(g, kind, wu).value;
        std::bernoulli_distribution coin(0.5);
        for (std::size_t j = 0; j < g.k(); ++j) {
            if (!coin(rng)) continue;
            for (std::size_t row = 0; row < g.u.rows(); ++row) g.u(row, j) = -g.u(row, j);
            for (std::size_t row = 0; row < g.v.rows(); ++row) g.v(row, j) = -g.v(row, j);
        }
        worst_sign = std::max(worst_sign, oracle::rel_err(role_se_from_svd(g, kind, wu).value, before));
    }
    o.notes << "residual " << worst_residual << ", sign " << worst_sign;
    o.require(energy_bad == 0, std::to_string(energy_bad) + " truncations below 90% energy");
    o.require(minimal_bad == 0, std::to_string(minimal_bad) + " truncations not minimal");
    o.require(worst_residual <= 1e-8, "reconstruction residual inconsistent with discarded spectrum");
    o.require(worst_sign <= 1e-10, "role SE depends on singular-vector signs");
}

void aggregation_algebra(Outcome& o) {
    std::mt19937_64 rng(4004);
    std::uniform_real_distribution<double> p01(1e-9, 1.0 - 1e-9);
    std::normal_distribution<double> g;
    bool idem = true, perm = true, range = true, median = true, flat = true, dominance = true;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + std::size_t(i) % 7;
        const double p = p01(rng);
        const std::vector<double> same(n, p);
        idem &= std::abs(soft_or_n(same) - p) <= 1e-12;
        std::vector<double> ps(n);
        for (double& x : ps) x = p01(rng);
        const double v = soft_or_n(ps);
        range &= v > 0.0 && v < 1.0;
        std::shuffle(ps.begin(), ps.end(), rng);
        perm &= std::abs(soft_or_n(ps) - v) <= 1e-12;

        std::vector<double> raw(3 + std::size_t(i) % 30);
        for (double& x : raw) x = g(rng);
        const auto z = mad_sigmoid(raw);
        const double med = lower_median(raw);
        for (std::size_t j = 0; j < raw.size(); ++j) {
            if (raw[j] == med) median &= z[j] == 0.5;
            range &= z[j] > 0.0 && z[j] < 1.0;
        }
        const std::vector<double> constant(raw.size(), raw[0]);
        for (double x : mad_sigmoid(constant)) flat &= x == 0.5;

        const std::size_t layers = 2 + std::size_t(i) % 40;
        ScoreTable nv, se;
        nv.metric = Metric::nv;
        se.metric = Metric::se;
        nv.kinds = se.kinds = component_kinds(i % 2 == 0);
        for (std::size_t l = 0; l < layers; ++l) {
            std::vector<double> a(nv.kinds.size()), b(nv.kinds.size());
            for (double& x : a) x = 3.0 * g(rng);
            for (double& x : b) x = std::exp(g(rng));
            nv.values.push_back(a);
            se.values.push_back(b);
        }
        const LayerScores s = aggregate(nv, se);
        for (std::size_t l = 0; l < layers; ++l) dominance &= s.s_nsds[l] >= std::max(s.s_nv[l], s.s_se[l]) - 1e-12;
    }
    o.require(idem, "soft-or idempotence");
    o.require(perm, "soft-or permutation invariance");
    o.require(range, "open unit interval range");
    o.require(median, "median sample not mapped to 0.5");
    o.require(flat, "constant column not mapped to 0.5");
    o.require(dominance, "final merge dominance");
}

void budget_exactness(Outcome& o) {
    std::mt19937_64 rng(5005);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool exact = true, fidelity = true, monotone = true;
    for (std::size_t layers = 1; layers <= 64; ++layers) {
        std::vector<double> scores(layers);
        for (double& x : scores) x = u(rng);
        if (layers % 5 == 0) scores[layers / 2] = scores[0];  // exercise ties
        std::vector<int> prev(layers, 2);
        for (int step = 0; step <= 20; ++step) {
            const double b = 2.0 + 0.1 * step;
            const auto plan = allocate(scores, b);
            const double mean = std::accumulate(plan.bits.begin(), plan.bits.end(), 0.0) / double(layers);
            exact &= std::abs(mean - b) <= 2.0 / double(layers);
            for (std::size_t i = 0; i < layers; ++i) {
                for (std::size_t j = 0; j < layers; ++j)
                    if (scores[i] > scores[j]) fidelity &= plan.bits[i] >= plan.bits[j];
                monotone &= plan.bits[i] >= prev[i];
            }
            prev = plan.bits;
        }
    }
    o.require(exact, "mean bits deviates from budget by more than 2/L");
    o.require(fidelity, "rank fidelity");
    o.require(monotone, "raising the budget demoted a layer");
}

void ground_truth(Outcome& o) {
    const ArchConfig c = fixture_config();
    const TensorStore heavy = synth_model(c, kFixtureSeed, SynthProfile{{2, 5}, {}, 2});
    const NsdsResult hr = score_nsds(heavy, c);
    const BitAllocationPlan plan = allocate(hr.scores.s_nsds, 2.5);
    std::set<std::size_t> four;
    for (std::size_t l = 0; l < plan.bits.size(); ++l)
        if (plan.bits[l] == 4) four.insert(l);
    o.notes << "4-bit " << set_text(four);
    o.require(four == std::set<std::size_t>{2, 5}, "heavy-tail layers not recovered");

    const TensorStore low = synth_model(c, kFixtureSeed, SynthProfile{{}, {1, 6}, 2});
    const NsdsResult lr = score_nsds(low, c);
    const auto bottom = top_k(lr.scores.s_se, 2, Direction::lower_is_sensitive);
    o.notes << ", SE bottom two " << set_text(bottom);
    o.require(bottom == std::set<std::size_t>{1, 6}, "low-rank layers not at the bottom of the SE ranking");
}

void baseline_sanity(Outcome& o) {
    std::mt19937_64 rng(7007);
    bool raw = true;
    for (int i = 0; i < 100; ++i) {
        const auto x = oracle::gaussian_vector(16 + std::size_t(i) * 7, rng);
        raw &= raw_kurtosis(x) == excess_kurtosis(x) + 3.0;
    }
    o.require(raw, "raw kurtosis differs from excess + 3");

    const auto spike = kurtboost_scores({3, 3, 3, 50, 3, 3, 3, 3});
    const double zmax = *std::max_element(spike.z.begin(), spike.z.end());
    const bool flagged = std::find(spike.outliers.begin(), spike.outliers.end(), 3) != spike.outliers.end();
    o.notes << "spike max z " << zmax << " vs threshold " << kKurtBoostThreshold;
    o.require(flagged, "spike fixture: layer 3 not flagged (max difference z " + std::to_string(zmax) + " <= " +
                           std::to_string(kKurtBoostThreshold) + ")");

    SynthShape s;
    s.num_layers = 4;
    const ArchConfig c = make_arch_config(s);
    const TensorStore store = synth_model(c, kFixtureSeed, SynthProfile{{1}, {}, 2});
    double zd_gap = 0.0;
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        const auto w = layer_weights(store, c, l);
        const double base = zd_score(w);
        for (double scale : {0.5, 7.0}) {
            std::vector<Matrix> scaled;
            for (const Matrix* m : w) {
                Matrix copy = *m;
                for (double& v : copy.values()) v *= scale;
                scaled.push_back(std::move(copy));
            }
            std::vector<const Matrix*> ptrs;
            for (const auto& m : scaled) ptrs.push_back(&m);
            zd_gap = std::max(zd_gap, std::abs(zd_score(ptrs) - base));
        }
    }
    o.require(zd_gap <= 1e-12, "ZD not scale invariant");

    bool mse = true;
    std::student_t_distribution<double> t(3.0);
    for (int i = 0; i < 100; ++i) {
        std::vector<Matrix> layer;
        for (int j = 0; j < 3; ++j) {
            Matrix m(8 + i % 9, 40 + 13 * j);
            for (double& v : m.values()) v = i % 2 ? t(rng) : std::normal_distribution<double>()(rng);
            layer.push_back(std::move(m));
        }
        std::vector<const Matrix*> ptrs;
        for (const auto& m : layer) ptrs.push_back(&m);
        mse &= mse_score(ptrs, 4) <= mse_score(ptrs, 2);
    }
    o.require(mse, "MSE(4-bit) > MSE(2-bit)");
}

void quantizer_bounds(Outcome& o) {
    std::mt19937_64 rng(8008);
    std::uniform_int_distribution<std::size_t> len(1, 200);
    std::student_t_distribution<double> t(3.0);
    bool bound = true, idem = true;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = len(rng);
        const int bits = i % 2 ? 2 : 4;
        Matrix w(1, n);
        for (double& v : w.values()) v = (i % 3 == 0 ? t(rng) : std::normal_distribution<double>()(rng)) * 0.05;
        if (i % 50 == 0) std::fill(w.values().begin(), w.values().end(), 0.3);
        const auto q = rtn_quantize(w, bits, n);
        const Matrix r = rtn_dequantize(q);
        double err = 0.0;
        for (std::size_t j = 0; j < n; ++j) err = std::max(err, std::abs(w(0, j) - r(0, j)));
        bound &= err <= q.scales[0] / 2 + 1e-12;
        const Matrix again = fake_quantize(r, bits, n);
        for (std::size_t j = 0; j < n; ++j) idem &= std::abs(again(0, j) - r(0, j)) <= 1e-12 * std::max(1.0, std::abs(r(0, j)));
    }
    o.require(bound, "group error exceeds half a step");
    o.require(idem, "quantize-dequantize not idempotent");

    const ArchConfig c = fixture_config();
    const TensorStore store = synth_model(c, kFixtureSeed, {});
    const auto plan = allocate(std::vector<double>{0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6}, 3.0);
    const TensorStore q = apply_plan(store, c, plan);
    std::set<std::string> layer_names;
    for (std::size_t l = 0; l < c.num_layers; ++l)
        for (TensorKind k : layer_tensor_kinds(c.has_gate)) layer_names.insert(c.tensor_name(k, l));
    bool untouched = q.size() == store.size();
    std::size_t others = 0;
    for (const auto& [name, tensor] : store) {
        if (layer_names.contains(name)) continue;
        ++others;
        const auto& out = q.at(name);
        untouched &= out.source_dtype == tensor.source_dtype && out.value.rows() == tensor.value.rows() &&
                     std::memcmp(out.value.values().data(), tensor.value.values().data(),
                                 tensor.value.size() * sizeof(double)) == 0;
    }
    o.notes << others << " non-layer tensors checked";
    o.require(untouched && others > 0, "non-layer tensors modified");
}

void determinism(Outcome& o) {
    const fs::path dir = fs::temp_directory_path() / "nsds_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string model = (dir / "m.safetensors").string(), config = (dir / "m.json").string();
    o.require(cli({"synth", "--out", model, "--config", config, "--seed", std::to_string(kFixtureSeed), "--profile",
                   R"({"heavy_tail":[2,5]})"}) == 0,
              "synth failed");
    std::vector<std::string> reports, plans;
    for (const char* threads : {"1", "4", "1", "4"}) {
        const std::string r = (dir / ("r" + std::to_string(reports.size()) + ".json")).string();
        const std::string p = (dir / ("p" + std::to_string(plans.size()) + ".json")).string();
        o.require(cli({"score", "--model", model, "--config", config, "--threads", threads, "--out", r}) == 0,
                  "score failed");
        o.require(cli({"allocate", "--model", model, "--config", config, "--threads", threads, "--budget", "2.5",
                       "--out", p}) == 0,
                  "allocate failed");
        reports.push_back(slurp(r));
        plans.push_back(slurp(p));
    }
    const bool same_reports = std::all_of(reports.begin(), reports.end(), [&](const auto& s) { return s == reports[0]; });
    const bool same_plans = std::all_of(plans.begin(), plans.end(), [&](const auto& s) { return s == plans[0]; });
    o.require(!reports[0].empty() && same_reports, "reports differ between runs");
    o.require(!plans[0].empty() && same_plans, "plans differ between runs");
    fs::remove_all(dir);
}

void container_round_trip(Outcome& o) {
    std::mt19937_64 rng(10010);
    std::uniform_int_distribution<std::size_t> count(1, 6), dim(1, 40);
    std::normal_distribution<double> g;
    bool exact = true;
    const fs::path path = fs::temp_directory_path() / "nsds_acceptance_rt.safetensors";
    for (int i = 0; i < 50; ++i) {
        TensorStore store;
        const std::size_t n = count(rng);
        for (std::size_t j = 0; j < n; ++j) {
            Matrix m(dim(rng), dim(rng));
            for (double& v : m.values()) v = g(rng) * std::pow(10.0, double(int(j) - 3));
            store.insert("tensor." + std::to_string(j), Tensor{std::move(m), DType::f64});
        }
        write_container(store, path);
        exact &= load_container(path) == store;
    }
    fs::remove(path);
    o.require(exact, "round trip not element-exact");

    const ErrorKind malformed = container_error(framed(R"({"t":{"dtype":"F64","shape":[2)", 16));
    const ErrorKind past_end =
        container_error(framed(R"({"t":{"dtype":"F64","shape":[2,2],"data_offsets":[0,64]}})", 32));
    o.require(malformed == ErrorKind::parse && exit_code(malformed) == 2, "malformed header not a parse error");
    o.require(past_end == ErrorKind::integrity && exit_code(past_end) == 2, "out-of-range extent not an integrity error");
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "formula constants", 1.0, formula_constants},
        {2, "kurtosis oracle equivalence", 10.0, kurtosis_oracle},
        {3, "SVD truncation contract", 60.0, svd_contract},
        {4, "aggregation algebra", 10.0, aggregation_algebra},
        {5, "budget exactness and monotonicity", 10.0, budget_exactness},
        {6, "ground-truth recovery", 120.0, ground_truth},
        {7, "baseline sanity", 30.0, baseline_sanity},
        {8, "quantizer bounds", 10.0, quantizer_bounds},
        {9, "end-to-end determinism", 60.0, determinism},
        {10, "container round trip", 10.0, container_round_trip},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.body(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (seconds > c.limit_seconds) o.require(false, "runtime over " + std::to_string(c.limit_seconds) + " s");
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " [" << seconds
                  << " s] " << o.notes.str() << std::endl;
    }
    std::cout << (criteria.size() - std::size_t(failures)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failures == 0 ? 0 : 1;
}
