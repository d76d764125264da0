// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_DATA_HPP
#define WSSL_DATA_HPP

// Synthetic two-class 2-D datasets (linearly separable blobs, concentric
// circles, interleaving moons), the labeled/validation/unlabeled/test split,
// and CSV persistence. Unlabeled ground-truth labels ride along for analysis
// but the training loop only ever sees the points.

#include <cstdint>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wssl/io.hpp"
#include "wssl/objective.hpp"
#include "wssl/rng.hpp"

namespace wssl {

struct RawPoint {
    double x0;
    double x1;
    int label;  // 0 or 1
};

using RawDataset = std::vector<RawPoint>;

// Two unit-variance Gaussian blobs on either side of the hyperplane x0 = 0,
// resampled so every point keeps a distance of at least margin/2 from it.
// Classes alternate by index, so counts differ by at most one.
inline RawDataset gen_linear(std::size_t n, double margin, std::uint64_t seed) {
    if (n < 4) throw std::invalid_argument("gen_linear: n must be >= 4");
    if (margin < 0.0) throw std::invalid_argument("gen_linear: margin must be >= 0");
    SeededRng rng(seed);
    RawDataset out;
    out.reserve(n);
    const double offset = margin / 2.0 + 1.5;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double side = label == 1 ? 1.0 : -1.0;
        double x0;
        do {
            x0 = side * offset + rng.normal();
        } while (side * x0 < margin / 2.0);
        out.push_back({x0, rng.normal(), label});
    }
    return out;
}

// Concentric rings: class 0 on radius 0.5, class 1 on radius 1.0, plus
// isotropic Gaussian noise.
inline RawDataset gen_circles(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 4) throw std::invalid_argument("gen_circles: n must be >= 4");
    if (noise < 0.0) throw std::invalid_argument("gen_circles: noise must be >= 0");
    SeededRng rng(seed);
    RawDataset out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double r = label == 1 ? 1.0 : 0.5;
        const double phi = 2.0 * std::numbers::pi * rng.uniform();
        out.push_back({r * std::cos(phi) + noise * rng.normal(),
                       r * std::sin(phi) + noise * rng.normal(), label});
    }
    return out;
}

// Two interleaving half-circle arcs: class 0 on the unit circle around the
// origin (upper half), class 1 on the unit circle around (1, 0.5) (lower
// half), plus isotropic Gaussian noise.
inline RawDataset gen_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 4) throw std::invalid_argument("gen_moons: n must be >= 4");
    if (noise < 0.0) throw std::invalid_argument("gen_moons: noise must be >= 0");
    SeededRng rng(seed);
    RawDataset out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double t = std::numbers::pi * rng.uniform();
        double x0, x1;
        if (label == 0) {
            x0 = std::cos(t);
            x1 = std::sin(t);
        } else {
            x0 = 1.0 - std::cos(t);
            x1 = 0.5 - std::sin(t);
        }
        out.push_back({x0 + noise * rng.normal(), x1 + noise * rng.normal(), label});
    }
    return out;
}

struct LabeledPoint {
    double x0;
    double x1;
    int label;
};

struct SplitDataset {
    std::vector<LabeledPoint> labeled;
    std::vector<LabeledPoint> validation;
    std::vector<LabeledPoint> test;
    DenseMatrix unlabeled_x;              // row index == example id
    std::vector<int> unlabeled_hidden;    // ground truth; analysis/evaluation only

    std::size_t unlabeled_size() const { return unlabeled_x.rows(); }
};

inline LabeledBatch to_batch(const std::vector<LabeledPoint>& pts) {
    LabeledBatch b;
    b.x = DenseMatrix(pts.size(), 2);
    b.labels.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        b.x(i, 0) = pts[i].x0;
        b.x(i, 1) = pts[i].x1;
        b.labels[i] = pts[i].label;
    }
    return b;
}

// Class-balanced labeled and validation splits (odd sizes give class 0 the
// extra point), then n_unlabeled points from the shuffled remainder; whatever
// is left over becomes the test set. Splits are disjoint by construction.
inline SplitDataset split(const RawDataset& raw, std::size_t n_labeled,
                          std::size_t n_validation, std::size_t n_unlabeled,
                          std::uint64_t seed) {
    if (raw.size() < n_labeled + n_validation + n_unlabeled)
        throw std::invalid_argument("split: raw dataset has " + std::to_string(raw.size()) +
                                    " points, need at least " +
                                    std::to_string(n_labeled + n_validation + n_unlabeled));
    SeededRng rng(seed);
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < raw.size(); ++i)
        by_class[raw[i].label == 1 ? 1 : 0].push_back(i);
    shuffle(rng, by_class[0]);
    shuffle(rng, by_class[1]);

    const std::size_t nl0 = (n_labeled + 1) / 2, nl1 = n_labeled / 2;
    const std::size_t nv0 = (n_validation + 1) / 2, nv1 = n_validation / 2;
    if (by_class[0].size() < nl0 + nv0 || by_class[1].size() < nl1 + nv1)
        throw std::invalid_argument("split: not enough points per class for balanced splits");

    SplitDataset ds;
    std::size_t used[2] = {0, 0};
    auto take = [&](int cls) {
        const std::size_t idx = by_class[cls][used[cls]++];
        return raw[idx];
    };
    for (std::size_t i = 0; i < nl0; ++i) {
        const RawPoint p = take(0);
        ds.labeled.push_back({p.x0, p.x1, p.label});
    }
    for (std::size_t i = 0; i < nl1; ++i) {
        const RawPoint p = take(1);
        ds.labeled.push_back({p.x0, p.x1, p.label});
    }
    for (std::size_t i = 0; i < nv0; ++i) {
        const RawPoint p = take(0);
        ds.validation.push_back({p.x0, p.x1, p.label});
    }
    for (std::size_t i = 0; i < nv1; ++i) {
        const RawPoint p = take(1);
        ds.validation.push_back({p.x0, p.x1, p.label});
    }

    std::vector<std::size_t> rest;
    for (int cls = 0; cls < 2; ++cls)
        for (std::size_t i = used[cls]; i < by_class[cls].size(); ++i)
            rest.push_back(by_class[cls][i]);
    shuffle(rng, rest);

    ds.unlabeled_x = DenseMatrix(n_unlabeled, 2);
    ds.unlabeled_hidden.resize(n_unlabeled);
    for (std::size_t i = 0; i < n_unlabeled; ++i) {
        const RawPoint& p = raw[rest[i]];
        ds.unlabeled_x(i, 0) = p.x0;
        ds.unlabeled_x(i, 1) = p.x1;
        ds.unlabeled_hidden[i] = p.label;
    }
    for (std::size_t i = n_unlabeled; i < rest.size(); ++i) {
        const RawPoint& p = raw[rest[i]];
        ds.test.push_back({p.x0, p.x1, p.label});
    }
    return ds;
}

// CSV schema: split,id,x0,x1,label with one header row. Coordinates use 17
// significant digits so values round-trip exactly. Unlabeled rows carry the
// hidden ground-truth label, flagged by the split column.
inline std::string dataset_to_csv(const SplitDataset& ds) {
    std::ostringstream out;
    out << "split,id,x0,x1,label\n";
    auto emit = [&](const char* name, std::size_t id, double x0, double x1, int label) {
        out << name << ',' << id << ',' << fmt_sig(x0, 17) << ',' << fmt_sig(x1, 17) << ','
            << label << '\n';
    };
    for (std::size_t i = 0; i < ds.labeled.size(); ++i)
        emit("labeled", i, ds.labeled[i].x0, ds.labeled[i].x1, ds.labeled[i].label);
    for (std::size_t i = 0; i < ds.validation.size(); ++i)
        emit("validation", i, ds.validation[i].x0, ds.validation[i].x1, ds.validation[i].label);
    for (std::size_t i = 0; i < ds.unlabeled_size(); ++i)
        emit("unlabeled", i, ds.unlabeled_x(i, 0), ds.unlabeled_x(i, 1), ds.unlabeled_hidden[i]);
    for (std::size_t i = 0; i < ds.test.size(); ++i)
        emit("test", i, ds.test[i].x0, ds.test[i].x1, ds.test[i].label);
    return out.str();
}

inline void write_dataset_csv(const std::string& path, const SplitDataset& ds) {
    write_text_atomic(path, dataset_to_csv(ds));
}

inline SplitDataset parse_dataset_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "split,id,x0,x1,label")
        throw IoError("dataset CSV: missing or malformed header");
    SplitDataset ds;
    struct URow {
        std::size_t id;
        double x0, x1;
        int label;
    };
    std::vector<URow> urows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string split_name, id_s, x0_s, x1_s, label_s;
        if (!std::getline(ls, split_name, ',') || !std::getline(ls, id_s, ',') ||
            !std::getline(ls, x0_s, ',') || !std::getline(ls, x1_s, ',') ||
            !std::getline(ls, label_s))
            throw IoError("dataset CSV: malformed row at line " + std::to_string(lineno));
        LabeledPoint p{};
        try {
            p.x0 = std::stod(x0_s);
            p.x1 = std::stod(x1_s);
            p.label = std::stoi(label_s);
        } catch (const std::exception&) {
            throw IoError("dataset CSV: bad number at line " + std::to_string(lineno));
        }
        if (split_name == "labeled") {
            ds.labeled.push_back(p);
        } else if (split_name == "validation") {
            ds.validation.push_back(p);
        } else if (split_name == "test") {
            ds.test.push_back(p);
        } else if (split_name == "unlabeled") {
            urows.push_back({static_cast<std::size_t>(std::stoul(id_s)), p.x0, p.x1, p.label});
        } else {
            throw IoError("dataset CSV: unknown split '" + split_name + "' at line " +
                          std::to_string(lineno));
        }
    }
    ds.unlabeled_x = DenseMatrix(urows.size(), 2);
    ds.unlabeled_hidden.assign(urows.size(), 0);
    std::vector<bool> seen(urows.size(), false);
    for (const URow& r : urows) {
        if (r.id >= urows.size() || seen[r.id])
            throw IoError("dataset CSV: unlabeled ids must be stable 0..n-1 without repeats");
        seen[r.id] = true;
        ds.unlabeled_x(r.id, 0) = r.x0;
        ds.unlabeled_x(r.id, 1) = r.x1;
        ds.unlabeled_hidden[r.id] = r.label;
    }
    return ds;
}

inline SplitDataset read_dataset_csv(const std::string& path) {
    return parse_dataset_csv(read_text(path));
}

}  // namespace wssl

#endif  // WSSL_DATA_HPP
