#include "nsds/pipeline.hpp"

#include "nsds/decomposition.hpp"
#include "nsds/log.hpp"
#include "nsds/numerical_vulnerability.hpp"
#include "nsds/parallel.hpp"

namespace nsds {

NsdsResult score_nsds(const TensorStore& store, const ArchConfig& config, const ScoringOptions& options) {
    validate_store(store, config);
    const SEOptions se_opts = options.se_options();
    const Matrix wu_trunc = truncate_unembedding(resolve_unembedding(store, config), se_opts);

    NsdsResult result;
    result.kinds = component_kinds(config.has_gate);
    result.raw_nv.metric = Metric::nv;
    result.raw_se.metric = Metric::se;
    result.raw_nv.kinds = result.kinds;
    result.raw_se.kinds = result.kinds;
    result.raw_nv.values.assign(config.num_layers, {});
    result.raw_se.values.assign(config.num_layers, {});

    parallel_for(config.num_layers, options.threads, [&](std::size_t l) {
        const LayerComponents lc = decompose_layer(store, config, l);
        const ComponentScores nv = nv_layer(lc);
        const ComponentScores se = se_layer(lc, wu_trunc, se_opts);
        std::vector<double> nv_row, se_row;
        for (ComponentKind kind : result.kinds) {
            nv_row.push_back(nv.at(kind));
            se_row.push_back(se.at(kind));
        }
        result.raw_nv.values[l] = std::move(nv_row);
        result.raw_se.values[l] = std::move(se_row);
    });
    log::info("scored " + std::to_string(config.num_layers) + " layers");

    result.scores = aggregate(result.raw_nv, result.raw_se, options.epsilon);
    return result;
}

}  // namespace nsds
