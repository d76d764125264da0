// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_REPORT_HPP
#define WSSL_REPORT_HPP

// Run artifacts: metrics.csv, weights.csv, boundary.csv, analysis.csv and
// the manifest, all written atomically into the run directory. Metrics use
// 9 significant digits; only dataset CSVs use 17.

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "wssl/config.hpp"
#include "wssl/data.hpp"
#include "wssl/trainer.hpp"

namespace wssl {

inline std::string metrics_to_csv(const std::vector<LogRow>& log) {
    std::ostringstream out;
    out << "iter,val_loss,val_err,test_err,lambda_mean,lambda_min,lambda_max\n";
    for (const LogRow& r : log)
        out << r.iter << ',' << fmt_sig(r.val_loss, 9) << ',' << fmt_sig(r.val_err, 9) << ','
            << fmt_sig(r.test_err, 9) << ',' << fmt_sig(r.lambda_mean, 9) << ','
            << fmt_sig(r.lambda_min, 9) << ',' << fmt_sig(r.lambda_max, 9) << '\n';
    return out.str();
}

inline std::string weights_to_csv(
    const std::vector<std::pair<int, std::vector<double>>>& weight_log) {
    std::ostringstream out;
    out << "iter,example_id,lambda\n";
    for (const auto& [iter, values] : weight_log)
        for (std::size_t id = 0; id < values.size(); ++id)
            out << iter << ',' << id << ',' << fmt_sig(values[id], 9) << '\n';
    return out.str();
}

struct Bbox {
    double x0_min = 0.0, x0_max = 1.0, x1_min = 0.0, x1_max = 1.0;
};

inline Bbox dataset_bbox(const SplitDataset& ds) {
    Bbox b;
    bool first = true;
    auto fold = [&](double x0, double x1) {
        if (first) {
            b = {x0, x0, x1, x1};
            first = false;
            return;
        }
        b.x0_min = std::min(b.x0_min, x0);
        b.x0_max = std::max(b.x0_max, x0);
        b.x1_min = std::min(b.x1_min, x1);
        b.x1_max = std::max(b.x1_max, x1);
    };
    for (const LabeledPoint& p : ds.labeled) fold(p.x0, p.x1);
    for (const LabeledPoint& p : ds.validation) fold(p.x0, p.x1);
    for (const LabeledPoint& p : ds.test) fold(p.x0, p.x1);
    for (std::size_t i = 0; i < ds.unlabeled_size(); ++i)
        fold(ds.unlabeled_x(i, 0), ds.unlabeled_x(i, 1));
    return b;
}

// Decision-surface grid: 100x100 over the data bounding box padded by 20%
// per side, one block of rows per snapshot iteration.
inline std::string boundary_to_csv(const std::vector<std::pair<int, Mlp>>& snapshots,
                                   const Bbox& bbox, std::size_t grid = 100) {
    std::ostringstream out;
    out << "iter,x0,x1,pred_class,pred_prob\n";
    const double pad0 = 0.2 * (bbox.x0_max - bbox.x0_min);
    const double pad1 = 0.2 * (bbox.x1_max - bbox.x1_min);
    const double lo0 = bbox.x0_min - pad0, hi0 = bbox.x0_max + pad0;
    const double lo1 = bbox.x1_min - pad1, hi1 = bbox.x1_max + pad1;
    DenseMatrix grid_x(grid * grid, 2);
    for (std::size_t i = 0; i < grid; ++i) {
        const double x0 = lo0 + (hi0 - lo0) * static_cast<double>(i) /
                                    static_cast<double>(grid - 1);
        for (std::size_t j = 0; j < grid; ++j) {
            const double x1 = lo1 + (hi1 - lo1) * static_cast<double>(j) /
                                        static_cast<double>(grid - 1);
            grid_x(i * grid + j, 0) = x0;
            grid_x(i * grid + j, 1) = x1;
        }
    }
    for (const auto& [iter, net] : snapshots) {
        const auto [logits, cache] = forward(net, grid_x);
        for (std::size_t r = 0; r < grid_x.rows(); ++r) {
            const std::vector<double> p = softmax(logits.row(r));
            const std::size_t k = argmax_lowest_tie(p);
            out << iter << ',' << fmt_sig(grid_x(r, 0), 9) << ',' << fmt_sig(grid_x(r, 1), 9)
                << ',' << k << ',' << fmt_sig(p[k], 9) << '\n';
        }
    }
    return out.str();
}

inline std::string analysis_to_csv(const LambdaAgreement& agg) {
    std::ostringstream out;
    out << "lambda_mean_pl_correct,lambda_mean_pl_incorrect,n_correct,n_incorrect\n";
    out << fmt_sig(agg.mean_correct, 9) << ',' << fmt_sig(agg.mean_incorrect, 9) << ','
        << agg.n_correct << ',' << agg.n_incorrect << '\n';
    return out.str();
}

// Loads the dataset description written by gen-data, when present, for
// embedding into the run manifest.
inline std::vector<std::pair<std::string, std::string>> dataset_info_for(
    const std::string& data_path) {
    std::vector<std::pair<std::string, std::string>> info;
    const std::filesystem::path manifest =
        std::filesystem::path(data_path).parent_path() / "manifest.cfg";
    std::error_code ec;
    if (!std::filesystem::exists(manifest, ec)) return info;
    try {
        for (const auto& [k, v] : parse_kv(read_text(manifest)))
            if (k != "command" && k != "version" && k != "out") info.emplace_back(k, v);
    } catch (const std::exception&) {
        info.clear();
    }
    return info;
}

// Runs one experiment and writes the full artifact set into spec.out.
// The manifest lands before training starts, so a failed run is still
// reproducible from it.
inline TrainResult execute_run(const RunSpec& spec, const SplitDataset& ds) {
    const std::filesystem::path dir(spec.out);
    write_text_atomic(dir / "manifest.cfg", run_manifest(spec, dataset_info_for(spec.data)));
    const TrainResult result = train(spec.cfg, ds);
    write_text_atomic(dir / "metrics.csv", metrics_to_csv(result.log));
    if (spec.cfg.weights_log_stride > 0)
        write_text_atomic(dir / "weights.csv", weights_to_csv(result.weight_log));
    write_text_atomic(dir / "boundary.csv", boundary_to_csv(result.snapshots, dataset_bbox(ds)));
    write_text_atomic(dir / "analysis.csv",
                      analysis_to_csv(pseudo_label_agreement(result.params, ds,
                                                             result.weights)));
    return result;
}

}  // namespace wssl

#endif  // WSSL_REPORT_HPP
