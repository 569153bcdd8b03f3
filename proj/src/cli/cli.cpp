#include "nsds/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "nsds/baselines.hpp"
#include "nsds/error.hpp"
#include "nsds/log.hpp"
#include "nsds/model_io.hpp"
#include "nsds/pipeline.hpp"
#include "nsds/quantizer.hpp"
#include "nsds/report.hpp"
#include "nsds/synth.hpp"

namespace nsds::cli {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kModule = "cli";

[[noreturn]] void usage_fail(const std::string& msg) { fail(ErrorKind::validation, std::string(kModule), msg); }

struct Invocation {
    std::string model_path;
    std::string config_path;
    double budget = kDefaultBudget;
    std::vector<std::string> metrics{"nsds"};
    std::size_t group_size = kDefaultGroupSize;
    double energy = 0.9;
    double epsilon = kDefaultEpsilon;
    std::uint64_t seed = 0;
    std::string output_path;
    std::string csv_path;
    std::string from_report;
    std::string plan_path;
    std::string profile = "\"gaussian\"";
    std::size_t threads = 0;
    bool wd_sublinear = false;
    int mse_bits = 2;

    SynthShape shape;
    bool no_gate = false;
    std::string dtype = "F32";

    ScoringOptions scoring() const {
        ScoringOptions o;
        o.energy = energy;
        o.epsilon = epsilon;
        o.budget = budget;
        o.wd_sublinear = wd_sublinear;
        o.mse_bits = mse_bits;
        o.group_size = group_size;
        o.threads = threads;
        return o;
    }

    void validate() const {
        if (!(budget >= 2.0 && budget <= 4.0)) usage_fail("--budget must lie in [2, 4]");
        if (!(energy > 0.0 && energy <= 1.0)) usage_fail("--energy must lie in (0, 1]");
        if (!(epsilon > 0.0)) usage_fail("--epsilon must be positive");
        if (group_size == 0) usage_fail("--group-size must be positive");
        if (mse_bits != 2 && mse_bits != 4) usage_fail("--mse-bits must be 2 or 4");
    }
};

// Accepts repeated flags and comma-separated lists.
std::vector<Method> parse_metrics(const std::vector<std::string>& raw) {
    std::vector<Method> out;
    for (const auto& item : raw) {
        std::stringstream ss(item);
        std::string name;
        while (std::getline(ss, name, ',')) {
            if (name.empty()) continue;
            const auto m = parse_method(name);
            if (!m) usage_fail("unknown metric '" + name + "'");
            out.push_back(*m);
        }
    }
    if (out.empty()) usage_fail("no metric given");
    return out;
}

void write_text(const std::string& path, const std::string& content, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << content;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::io, std::string(kModule), "cannot write " + path);
    f << content;
    if (!f) fail(ErrorKind::io, std::string(kModule), "failed writing " + path);
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::io, std::string(kModule), "cannot open " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::parse, std::string(kModule), path + " at byte " + std::to_string(e.byte) + ": invalid JSON");
    }
}

SynthProfile parse_profile(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        // Bare words such as gaussian are accepted without quotes.
        j = text;
    }
    return synth_profile_from_json(j);
}

struct Model {
    ArchConfig config;
    TensorStore store;
    std::string id;
};

Model load_model(const Invocation& inv) {
    if (inv.model_path.empty()) usage_fail("--model is required");
    if (inv.config_path.empty()) usage_fail("--config is required");
    Model m;
    m.config = load_arch_config(inv.config_path);
    m.store = load_container(inv.model_path);
    validate_store(m.store, m.config);
    m.id = fs::path(inv.model_path).stem().string();
    return m;
}

SensitivityReport score_report(const Model& m, Method method, const ScoringOptions& options) {
    if (method == Method::nsds) return make_report(m.id, m.config, score_nsds(m.store, m.config, options));
    return make_report(m.id, m.config, score_model(m.store, m.config, method, options));
}

BitAllocationPlan plan_for(const SensitivityReport& report, double budget) {
    BitAllocationPlan plan = plan_from_scores(report.layer_scores(), budget);
    plan.config_digest = report.config_digest;
    return plan;
}

int cmd_score(const Invocation& inv, std::ostream& out) {
    const auto metrics = parse_metrics(inv.metrics);
    if (metrics.size() != 1) usage_fail("score takes exactly one --metric");
    const Model m = load_model(inv);
    const SensitivityReport report = score_report(m, metrics.front(), inv.scoring());
    write_text(inv.output_path, emit_json(report), out);
    if (!inv.csv_path.empty()) write_text(inv.csv_path, emit_csv(report), out);
    return 0;
}

int cmd_allocate(const Invocation& inv, std::ostream& out) {
    SensitivityReport report;
    if (!inv.from_report.empty()) {
        log::info("reusing scores from " + inv.from_report);
        report = report_from_json(read_json_file(inv.from_report));
    } else {
        const auto metrics = parse_metrics(inv.metrics);
        if (metrics.size() != 1) usage_fail("allocate takes exactly one --metric");
        report = score_report(load_model(inv), metrics.front(), inv.scoring());
    }
    const BitAllocationPlan plan = plan_for(report, inv.budget);
    write_text(inv.output_path, to_json(plan).dump(2) + "\n", out);
    if (!inv.csv_path.empty()) {
        report.plan = plan;
        write_text(inv.csv_path, emit_csv(report), out);
    }
    return 0;
}

int cmd_compare(const Invocation& inv, std::ostream& out) {
    const auto metrics = parse_metrics(inv.metrics);
    if (metrics.size() < 2) usage_fail("compare needs at least two metrics");
    if (std::set<Method>(metrics.begin(), metrics.end()).size() != metrics.size()) usage_fail("duplicate metric");
    const Model m = load_model(inv);
    std::optional<SynthProfile> truth;
    if (!inv.profile.empty() && inv.profile != "\"gaussian\"") truth = parse_profile(inv.profile);

    std::ostringstream csv;
    csv << "method";
    for (std::size_t l = 0; l < m.config.num_layers; ++l) csv << ",l" << l;
    csv << ",hit_rate\n";
    for (Method method : metrics) {
        const BitAllocationPlan plan = plan_for(score_report(m, method, inv.scoring()), inv.budget);
        csv << to_string(method);
        for (int b : plan.bits) csv << ',' << b;
        csv << ',';
        if (truth && !truth->heavy_tail.empty()) {
            std::size_t hits = 0;
            for (std::size_t l : truth->heavy_tail) hits += (l < plan.bits.size() && plan.bits[l] == 4) ? 1 : 0;
            csv << format_double(double(hits) / double(truth->heavy_tail.size()));
        }
        csv << '\n';
    }
    write_text(inv.output_path, csv.str(), out);
    return 0;
}

int cmd_quantize(const Invocation& inv, std::ostream& out) {
    if (inv.output_path.empty()) usage_fail("--out is required");
    const Model m = load_model(inv);
    BitAllocationPlan plan;
    if (!inv.plan_path.empty()) {
        plan = plan_from_json(read_json_file(inv.plan_path));
    } else {
        const auto metrics = parse_metrics(inv.metrics);
        if (metrics.size() != 1) usage_fail("quantize takes exactly one --metric");
        plan = plan_for(score_report(m, metrics.front(), inv.scoring()), inv.budget);
    }
    const PlanApplication applied = apply_plan_detailed(m.store, m.config, plan, inv.group_size);
    write_container(applied.store, inv.output_path);
    out << "layer,bits,frobenius_error\n";
    double total = 0.0;
    for (std::size_t l = 0; l < plan.bits.size(); ++l) {
        out << l << ',' << plan.bits[l] << ',' << format_double(std::sqrt(applied.layer_squared_error[l])) << '\n';
        total += applied.layer_squared_error[l];
    }
    out << "total,," << format_double(std::sqrt(total)) << '\n';
    return 0;
}

int cmd_synth(const Invocation& inv, std::ostream&) {
    if (inv.output_path.empty()) usage_fail("--out is required");
    const SynthProfile profile = parse_profile(inv.profile);
    SynthShape shape = inv.shape;
    shape.has_gate = !inv.no_gate;
    const auto dtype = parse_dtype(inv.dtype);
    if (!dtype) usage_fail("unsupported --dtype '" + inv.dtype + "'");
    const ArchConfig config = make_arch_config(shape);
    const TensorStore store = synth_model(config, inv.seed, profile, *dtype);
    write_container(store, inv.output_path);
    save_arch_config(config, inv.config_path.empty() ? inv.output_path + ".config.json" : inv.config_path);
    return 0;
}

void add_common(CLI::App& sub, Invocation& inv) {
    sub.add_option("--model", inv.model_path, "Tensor container");
    sub.add_option("--config", inv.config_path, "Architecture config JSON");
    sub.add_option("--budget", inv.budget, "Target average bits per layer, in [2, 4]");
    sub.add_option("--metric", inv.metrics, "nsds|mse|zd|ewq|kurtboost (repeatable, comma lists accepted)");
    sub.add_option("--group-size", inv.group_size, "RTN group size along the input dimension");
    sub.add_option("--energy", inv.energy, "SVD truncation energy, in (0, 1]");
    sub.add_option("--epsilon", inv.epsilon, "MAD-sigmoid stabilizer");
    sub.add_option("--threads", inv.threads, "Worker threads (0 = auto)");
    sub.add_option("--out", inv.output_path, "Output path ('-' or omitted = stdout)");
    sub.add_option("--csv", inv.csv_path, "Also write a per-layer CSV table");
    sub.add_option("--mse-bits", inv.mse_bits, "Probe width for the MSE baseline");
    sub.add_flag("--wd-sublinear", inv.wd_sublinear, "Apply log(1+relu) to writing-density factors too");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    log::init_from_env();
    Invocation inv;
    CLI::App app{"Calibration-free layer sensitivity scoring and 2/4-bit allocation", "nsds"};
    app.require_subcommand(1);

    auto* score = app.add_subcommand("score", "Write a sensitivity report");
    auto* allocate = app.add_subcommand("allocate", "Write a 2/4-bit allocation plan");
    auto* compare = app.add_subcommand("compare", "Plans for several metrics side by side");
    auto* quantize = app.add_subcommand("quantize", "Apply a plan with the RTN quantizer");
    auto* synth = app.add_subcommand("synth", "Generate a synthetic checkpoint and config");
    for (auto* sub : {score, allocate, compare, quantize}) add_common(*sub, inv);
    allocate->add_option("--from-report", inv.from_report, "Reuse scores from a report");
    compare->add_option("--profile", inv.profile, "Synthetic profile giving ground-truth layers");
    quantize->add_option("--plan", inv.plan_path, "Plan JSON (otherwise computed from --budget/--metric)");

    synth->add_option("--out", inv.output_path, "Container path")->required();
    synth->add_option("--config", inv.config_path, "Config output path (default <out>.config.json)");
    synth->add_option("--seed", inv.seed, "RNG seed");
    synth->add_option("--profile", inv.profile, "Profile JSON, e.g. {\"heavy_tail\":[2,5]}");
    synth->add_option("--layers", inv.shape.num_layers);
    synth->add_option("--d-model", inv.shape.d_model);
    synth->add_option("--heads", inv.shape.num_heads);
    synth->add_option("--kv-heads", inv.shape.num_kv_heads);
    synth->add_option("--d-head", inv.shape.d_head);
    synth->add_option("--d-ffn", inv.shape.d_ffn);
    synth->add_option("--vocab", inv.shape.vocab_size);
    synth->add_flag("--no-gate", inv.no_gate);
    synth->add_flag("--tied", inv.shape.tied_embeddings);
    synth->add_option("--dtype", inv.dtype, "F16|BF16|F32|F64");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "ERROR 2 cli: " << e.what() << '\n';
        return 2;
    }

    try {
        inv.validate();
        if (*score) return cmd_score(inv, out);
        if (*allocate) return cmd_allocate(inv, out);
        if (*compare) return cmd_compare(inv, out);
        if (*quantize) return cmd_quantize(inv, out);
        if (*synth) return cmd_synth(inv, out);
    } catch (const Error& e) {
        const int code = exit_code(e.kind());
        err << "ERROR " << code << ' ' << e.module() << ": " << to_string(e.kind()) << ": " << e.what() << '\n';
        return code;
    } catch (const std::exception& e) {
        err << "ERROR 1 cli: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace nsds::cli
