#include "nsds/report.hpp"

#include <charconv>
#include <sstream>

#include "nsds/error.hpp"

namespace nsds {
namespace {

constexpr std::string_view kModule = "report";

[[noreturn]] void report_fail(const std::string& msg) { fail(ErrorKind::validation, std::string(kModule), msg); }

void check_layers(const SensitivityReport& r) {
    const std::size_t layers = r.num_layers();
    auto check_table = [&](const Table& t, const char* name) {
        if (t.size() != layers) report_fail(std::string(name) + " has the wrong number of layers");
        for (const auto& row : t)
            if (row.size() != r.component_kinds.size()) report_fail(std::string(name) + " row width mismatch");
    };
    if (r.metric == Method::nsds) {
        if (r.s_nv.size() != layers || r.s_se.size() != layers) report_fail("layer score vectors differ in length");
        check_table(r.raw_nv, "raw_nv");
        check_table(r.raw_se, "raw_se");
        check_table(r.normalized_nv, "normalized_nv");
        check_table(r.normalized_se, "normalized_se");
    }
    if (r.plan && r.plan->bits.size() != layers) report_fail("attached plan has the wrong number of layers");
}

}  // namespace

LayerScoreVector SensitivityReport::layer_scores() const {
    LayerScoreVector v;
    v.method = metric;
    v.values = metric == Method::nsds ? s_nsds : values;
    v.direction = direction;
    v.outliers = outliers;
    return v;
}

SensitivityReport make_report(std::string model_id, const ArchConfig& config, const NsdsResult& result) {
    SensitivityReport r;
    r.model_id = std::move(model_id);
    r.metric = Method::nsds;
    r.config_digest = config_digest(config);
    r.component_kinds = result.kinds;
    r.raw_nv = result.raw_nv.values;
    r.raw_se = result.raw_se.values;
    r.normalized_nv = result.scores.normalized_nv;
    r.normalized_se = result.scores.normalized_se;
    r.s_nv = result.scores.s_nv;
    r.s_se = result.scores.s_se;
    r.s_nsds = result.scores.s_nsds;
    return r;
}

SensitivityReport make_report(std::string model_id, const ArchConfig& config, const LayerScoreVector& scores) {
    SensitivityReport r;
    r.model_id = std::move(model_id);
    r.metric = scores.method;
    r.config_digest = config_digest(config);
    if (scores.method == Method::nsds) report_fail("NSDS reports are built from the full scoring result");
    r.values = scores.values;
    r.direction = scores.direction;
    r.outliers = scores.outliers;
    return r;
}

nlohmann::json to_json(const SensitivityReport& r) {
    check_layers(r);
    nlohmann::json scores;
    if (r.metric == Method::nsds) {
        std::vector<std::string> kinds;
        for (ComponentKind k : r.component_kinds) kinds.emplace_back(to_string(k));
        scores = {
            {"component_kinds", kinds},      {"raw_nv", r.raw_nv}, {"raw_se", r.raw_se},
            {"normalized_nv", r.normalized_nv}, {"normalized_se", r.normalized_se},
            {"s_nv", r.s_nv},                {"s_se", r.s_se},     {"s_nsds", r.s_nsds},
        };
    } else {
        scores = {{"values", r.values}, {"direction", std::string(to_string(r.direction))}, {"outliers", r.outliers}};
    }
    nlohmann::json j = {
        {"model_id", r.model_id},
        {"metric", std::string(to_string(r.metric))},
        {"scores", scores},
        {"config_digest", r.config_digest},
        {"tool_version", r.tool_version},
    };
    if (r.plan) j["plan"] = to_json(*r.plan);
    return j;
}

SensitivityReport report_from_json(const nlohmann::json& j) {
    try {
        SensitivityReport r;
        r.model_id = j.at("model_id").get<std::string>();
        const auto method = parse_method(j.at("metric").get<std::string>());
        if (!method) report_fail("unknown metric in report");
        r.metric = *method;
        r.config_digest = j.at("config_digest").get<std::string>();
        r.tool_version = j.at("tool_version").get<std::string>();
        const auto& s = j.at("scores");
        if (r.metric == Method::nsds) {
            for (const auto& name : s.at("component_kinds").get<std::vector<std::string>>()) {
                const auto kind = parse_component_kind(name);
                if (!kind) report_fail("unknown component kind '" + name + "'");
                r.component_kinds.push_back(*kind);
            }
            r.raw_nv = s.at("raw_nv").get<Table>();
            r.raw_se = s.at("raw_se").get<Table>();
            r.normalized_nv = s.at("normalized_nv").get<Table>();
            r.normalized_se = s.at("normalized_se").get<Table>();
            r.s_nv = s.at("s_nv").get<std::vector<double>>();
            r.s_se = s.at("s_se").get<std::vector<double>>();
            r.s_nsds = s.at("s_nsds").get<std::vector<double>>();
        } else {
            r.values = s.at("values").get<std::vector<double>>();
            const auto dir = parse_direction(s.at("direction").get<std::string>());
            if (!dir) report_fail("unknown direction in report");
            r.direction = *dir;
            r.outliers = s.at("outliers").get<std::vector<std::size_t>>();
        }
        if (j.contains("plan")) r.plan = plan_from_json(j.at("plan"));
        check_layers(r);
        return r;
    } catch (const nlohmann::json::exception& e) {
        report_fail(std::string("malformed report JSON: ") + e.what());
    }
}

std::string emit_json(const SensitivityReport& report) { return to_json(report).dump(2) + "\n"; }

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::string emit_csv(const SensitivityReport& r) {
    check_layers(r);
    std::ostringstream out;
    const bool nsds = r.metric == Method::nsds;
    out << (nsds ? "layer,s_nv,s_se,s_nsds,bits\n" : "layer,value,bits\n");
    for (std::size_t l = 0; l < r.num_layers(); ++l) {
        out << l << ',';
        if (nsds) {
            out << format_double(r.s_nv[l]) << ',' << format_double(r.s_se[l]) << ',' << format_double(r.s_nsds[l]);
        } else {
            out << format_double(r.values[l]);
        }
        out << ',';
        if (r.plan) out << r.plan->bits[l];
        out << '\n';
    }
    return out.str();
}

}  // namespace nsds
