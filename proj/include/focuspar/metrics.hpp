#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "focuspar/matrix.hpp"

namespace focuspar {

using BinaryMatrix = Matrix<unsigned char>;

struct MetricsReport {
    double mA = 0, acc = 0, prec = 0, recall = 0, f1 = 0;
    double r_at_1 = 0, r_at_2 = 0;
    std::vector<double> attr_accuracy;  // (TP/P + TN/N)/2 per attribute, NaN when excluded
    std::vector<int> excluded;          // attributes dropped from mA (no positives or no negatives)
};

/// Label-based mA and instance-based Acc/Prec/Recall/F1 for binary predictions.
/// Instance ratios use 0/0 := 1; F1 is computed from the averaged precision
/// and recall.
inline MetricsReport closed_set_metrics(const BinaryMatrix& pred, const BinaryMatrix& labels) {
    require(pred.same_shape(labels), "metrics: prediction/label shape mismatch");
    require(pred.rows() > 0, "metrics: empty split");
    const std::size_t n = pred.rows(), z = pred.cols();
    MetricsReport r;
    r.attr_accuracy.assign(z, std::nan(""));
    double ma_sum = 0;
    std::size_t ma_count = 0;
    for (std::size_t j = 0; j < z; ++j) {
        std::size_t p = 0, tp = 0, neg = 0, tn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels(i, j)) {
                ++p;
                tp += pred(i, j) ? 1 : 0;
            } else {
                ++neg;
                tn += pred(i, j) ? 0 : 1;
            }
        }
        if (p == 0 || neg == 0) {
            r.excluded.push_back(static_cast<int>(j));
            continue;
        }
        const double a = 0.5 * (double(tp) / double(p) + double(tn) / double(neg));
        r.attr_accuracy[j] = a;
        ma_sum += a;
        ++ma_count;
    }
    r.mA = ma_count > 0 ? ma_sum / double(ma_count) : 0.0;

    double acc = 0, prec = 0, rec = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t inter = 0, uni = 0, np = 0, nl = 0;
        for (std::size_t j = 0; j < z; ++j) {
            const bool a = pred(i, j) != 0, b = labels(i, j) != 0;
            inter += (a && b) ? 1 : 0;
            uni += (a || b) ? 1 : 0;
            np += a ? 1 : 0;
            nl += b ? 1 : 0;
        }
        acc += uni ? double(inter) / double(uni) : 1.0;
        prec += np ? double(inter) / double(np) : 1.0;
        rec += nl ? double(inter) / double(nl) : 1.0;
    }
    r.acc = acc / double(n);
    r.prec = prec / double(n);
    r.recall = rec / double(n);
    r.f1 = (r.prec + r.recall) > 0 ? 2.0 * r.prec * r.recall / (r.prec + r.recall) : 0.0;
    return r;
}

/// Image-to-text Recall@K.
///
/// For each image and each candidate group, the group's columns are ranked by
/// descending score (ties: lower column first). A positive (image, column) pair
/// whose column is marked `counted` is recalled at K if its rank is ≤ K.
/// Results are micro-averaged over all counted positive pairs; with no such
/// pair the recall is 1 by convention.
inline std::vector<double> recall_at_k(const Matrix<double>& scores, const BinaryMatrix& labels,
                                       const std::vector<std::vector<int>>& groups, const std::vector<bool>& counted,
                                       const std::vector<int>& ks) {
    require(scores.same_shape(labels), "recall_at_k: score/label shape mismatch");
    require(counted.size() == scores.cols(), "recall_at_k: counted mask width mismatch");
    require(!groups.empty(), "recall_at_k: empty candidate set");
    for (const auto& g : groups) {
        require(!g.empty(), "recall_at_k: empty candidate set");
        for (int c : g) require(c >= 0 && static_cast<std::size_t>(c) < scores.cols(), "recall_at_k: bad column");
    }
    for (int k : ks) require(k >= 1, "recall_at_k: K must be >= 1");
    std::vector<std::size_t> hits(ks.size(), 0);
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i)
        for (const auto& g : groups)
            for (int c : g) {
                if (!counted[static_cast<std::size_t>(c)] || !labels(i, static_cast<std::size_t>(c))) continue;
                ++pairs;
                const double s = scores(i, static_cast<std::size_t>(c));
                std::size_t rank = 1;
                for (int o : g) {
                    const double so = scores(i, static_cast<std::size_t>(o));
                    if (so > s || (so == s && o < c)) ++rank;
                }
                for (std::size_t q = 0; q < ks.size(); ++q)
                    if (rank <= static_cast<std::size_t>(ks[q])) ++hits[q];
            }
    std::vector<double> out(ks.size(), 1.0);
    if (pairs > 0)
        for (std::size_t q = 0; q < ks.size(); ++q) out[q] = double(hits[q]) / double(pairs);
    return out;
}

/// Plain form: every column is a candidate, every positive pair counts.
inline std::vector<double> recall_at_k(const Matrix<double>& scores, const BinaryMatrix& labels,
                                       const std::vector<int>& ks) {
    std::vector<int> all(scores.cols());
    for (std::size_t c = 0; c < all.size(); ++c) all[c] = static_cast<int>(c);
    return recall_at_k(scores, labels, {all}, std::vector<bool>(scores.cols(), true), ks);
}

}  // namespace focuspar
