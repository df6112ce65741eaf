#include "fcg/metrics.hpp"

#include <fstream>

#include "fcg/errors.hpp"

namespace fcg {

MetricsReport aggregate_metrics(std::vector<SampleRow> rows) {
    MetricsReport report;
    report.rows = std::move(rows);
    if (report.rows.empty()) return report;

    std::size_t successes = 0;
    double delta_sum = 0.0;
    double asgg_sum = 0.0;
    for (const SampleRow& row : report.rows) {
        if (row.success) {
            ++successes;
            delta_sum += row.delta;
        }
        asgg_sum += row.asgg;
    }
    report.asr = static_cast<double>(successes) / static_cast<double>(report.rows.size());
    report.pr = successes > 0 ? delta_sum / static_cast<double>(successes) : 0.0;
    report.asgg = asgg_sum / static_cast<double>(report.rows.size());
    return report;
}

nlohmann::json metrics_to_json(const MetricsReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const SampleRow& row : report.rows) {
        rows.push_back({{"seed", row.seed_id},
                        {"outcome", row.errored ? "error" : row.success ? "success" : "exhausted"},
                        {"delta", row.delta},
                        {"generations", row.generations},
                        {"sum_ng", row.sum_ng},
                        {"asgg", row.asgg}});
    }
    return {{"asr", report.asr}, {"pr", report.pr}, {"asgg", report.asgg},
            {"samples", std::move(rows)}};
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
    MetricsReport report;
    try {
        report.asr = j.at("asr").get<double>();
        report.pr = j.at("pr").get<double>();
        report.asgg = j.at("asgg").get<double>();
        for (const auto& rj : j.at("samples")) {
            SampleRow row;
            row.seed_id = rj.at("seed").get<std::string>();
            const std::string outcome = rj.at("outcome").get<std::string>();
            row.success = outcome == "success";
            row.errored = outcome == "error";
            row.delta = rj.at("delta").get<double>();
            row.generations = rj.at("generations").get<int>();
            row.sum_ng = rj.at("sum_ng").get<double>();
            row.asgg = rj.at("asgg").get<double>();
            report.rows.push_back(std::move(row));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
    return report;
}

void write_metrics_file(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << metrics_to_json(report).dump(2) << '\n';
}

} // namespace fcg
