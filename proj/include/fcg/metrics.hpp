#ifndef FCG_METRICS_HPP_
#define FCG_METRICS_HPP_

#include <string>
#include <vector>

#include <json.hpp>

namespace fcg {

struct SampleRow {
    std::string seed_id;
    bool success = false;
    bool errored = false;     // per-seed failure; counts toward N_m only
    double delta = 0.0;       // delta_i = P_add / P_ori (successes)
    int generations = 0;      // log rows consumed
    double sum_ng = 0.0;      // sum of surviving genes over generations
    double asgg = 0.0;        // sum_ng / generations, 0 when generations == 0
    double wall_ms = 0.0;     // volatile; never serialized into metrics.json
};

// ASR = N_a / N_m, PR = (1/N_a) sum of delta_i over successes,
// ASGG = mean per-sample ASGG. All recomputable from the rows.
struct MetricsReport {
    double asr = 0.0;
    double pr = 0.0;
    double asgg = 0.0;
    std::vector<SampleRow> rows;
};

MetricsReport aggregate_metrics(std::vector<SampleRow> rows);

// Deterministic document: wall-clock fields are excluded so identical
// seeds yield byte-identical files.
nlohmann::json metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

void write_metrics_file(const MetricsReport& report, const std::string& path);

} // namespace fcg

#endif // FCG_METRICS_HPP_
