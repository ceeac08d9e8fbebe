#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "focuspar/checkpoint.hpp"
#include "focuspar/metrics.hpp"
#include "focuspar/model.hpp"
#include "focuspar/optim.hpp"
#include "focuspar/synth.hpp"

namespace focuspar {

// Threads ------------------------------------------------------------------------

/// Worker count for read-only evaluation: hardware threads, capped by FOCUSPAR_THREADS.
inline unsigned worker_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FOCUSPAR_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
    }
    return n;
}

/// Runs fn(begin, end) over contiguous chunks of [0, n). Each chunk writes
/// only its own output slots, so results do not depend on the thread count.
inline void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(1, n));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                fn(std::min(n, w * chunk), std::min(n, (w + 1) * chunk));
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// Data ---------------------------------------------------------------------------

/// Dataset decoded into patch matrices, plus the attribute split in use.
template <class T>
struct PreparedData {
    AttributeSchema schema;
    RenderConfig render;
    std::vector<Matrix<T>> patches;  // per manifest entry
    BinaryMatrix labels;             // N×Z
    std::vector<std::size_t> train, val, test;
    std::vector<int> seen, unseen;

    const std::vector<std::size_t>& split(Split s) const {
        return s == Split::train ? train : (s == Split::val ? val : test);
    }
};

inline OpenDomainSplit resolve_open_domain(const DatasetManifest& m, int holdout) {
    if (holdout >= 0) return split_open_domain(m.schema, holdout);
    return {m.seen, m.unseen};
}

template <class T>
PreparedData<T> prepare_data(const DatasetManifest& m, int patch, int holdout) {
    PreparedData<T> d;
    d.schema = m.schema;
    d.render = m.config.render;
    const auto od = resolve_open_domain(m, holdout);
    d.seen = od.seen;
    d.unseen = od.unseen;
    d.labels = BinaryMatrix(m.entries.size(), m.schema.size());
    d.patches.resize(m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        const Image img = read_ppm(m.root / e.file);
        require(img.height == m.config.render.height && img.width == m.config.render.width,
                "image " + e.file + " does not match the dataset dimensions");
        d.patches[i] = extract_patches<T>(img, patch);
        for (std::size_t j = 0; j < e.labels.size(); ++j) d.labels(i, j) = e.labels[j];
        (e.split == Split::train ? d.train : (e.split == Split::val ? d.val : d.test)).push_back(i);
    }
    return d;
}

template <class T>
Matrix<T> label_block(const BinaryMatrix& labels, const std::vector<std::size_t>& rows, const std::vector<int>& cols) {
    Matrix<T> out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out(i, j) = labels(rows[i], static_cast<std::size_t>(cols[j])) ? T(1) : T(0);
    return out;
}

inline BinaryMatrix binary_block(const BinaryMatrix& labels, const std::vector<std::size_t>& rows,
                                 const std::vector<int>& cols) {
    BinaryMatrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = labels(rows[i], static_cast<std::size_t>(cols[j]));
    return out;
}

// Training -----------------------------------------------------------------------

struct LossRow {
    long step = 0;
    LossReport loss;
};

template <class T>
struct TrainResult {
    std::unique_ptr<FocusModel<T>> model;
    std::vector<LossRow> curve;
    long steps = 0;
    Checkpoint checkpoint;
};

inline nlohmann::json schema_json(const AttributeSchema& s) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& a : s.attributes())
        j.push_back({a.id, a.region, a.category, a.value, a.kind == AttributeKind::value ? "value" : "accessory"});
    return j;
}

inline Digest config_hash(const TrainConfig& cfg, const AttributeSchema& schema) {
    return model_hash(cfg, schema_json(schema));
}

inline std::string loss_csv(const std::vector<LossRow>& rows) {
    std::ostringstream out;
    out << "step,L_sim,L_racl,L_v2t,L_t2v,L_total\n" << std::setprecision(9);
    for (const auto& r : rows)
        out << r.step << ',' << r.loss.sim << ',' << r.loss.racl << ',' << r.loss.v2t << ',' << r.loss.t2v << ','
            << r.loss.total << '\n';
    return out.str();
}

using Logger = std::function<void(const std::string&)>;

/// Writes checkpoint.bin, config.json, vocab.txt into `dir`.
template <class T>
void write_model_artifacts(const std::filesystem::path& dir, const FocusModel<T>& model, const Checkpoint& ck) {
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "checkpoint.bin", ck);
    std::ofstream(dir / "config.json") << to_json(model.config()).dump(2) << '\n';
    model.vocab().save(dir / "vocab.txt");
}

/// Gradient-based training of the total objective on the train split, over
/// seen attributes only. Adam with linear warmup then cosine decay.
/// Single-threaded and deterministic given the config seed.
template <class T>
TrainResult<T> train(const TrainConfig& cfg, const PreparedData<T>& data, const std::filesystem::path& out_dir = {},
                     const Logger& log = nullptr) {
    validate(cfg);
    require(!data.train.empty(), "train: empty train split");
    require(!data.seen.empty(), "train: no seen attributes");
    TrainResult<T> res;
    res.model = std::make_unique<FocusModel<T>>(cfg, data.schema, data.render.height, data.render.width);
    auto& model = *res.model;
    const Digest hash = config_hash(cfg, data.schema);
    std::vector<std::string> frozen;
    if (cfg.freeze_text) frozen.push_back("text.");
    Adam<T> opt(model.params(), cfg.beta1, cfg.beta2, cfg.weight_decay, frozen);

    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    const long per_epoch = static_cast<long>((data.train.size() + bs - 1) / bs);
    const long total_steps = per_epoch * cfg.epochs;
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5EEDF00DULL);
    std::vector<std::size_t> order = data.train;
    Checkpoint last_good = make_checkpoint(model.params(), hash, 0);

    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t b = 0; b < order.size(); b += bs) {
            const std::vector<std::size_t> rows(order.begin() + static_cast<long>(b),
                                                order.begin() + static_cast<long>(std::min(order.size(), b + bs)));
            std::vector<const Matrix<T>*> imgs;
            for (auto r : rows) imgs.push_back(&data.patches[r]);
            const Matrix<T> y = label_block<T>(data.labels, rows, data.seen);
            Tape<T> tp;
            BatchOutput<T> out;
            try {
                out = model.batch_loss(tp, imgs, y, data.seen, data.seen);
            } catch (const NumericalError& e) {
                if (!out_dir.empty()) write_model_artifacts(out_dir, model, last_good);
                throw NumericalError(std::string("training diverged at step ") + std::to_string(step) + ": " + e.what());
            }
            model.params().zero_grad();
            tp.backward(out.total);
            const double lr = scheduled_lr(cfg.lr, step, cfg.warmup_steps, total_steps);
            opt.step(lr);
            res.curve.push_back({step, out.report});
            ++step;
            if (log && (step % 10 == 0 || step == total_steps)) {
                std::ostringstream msg;
                msg << "epoch " << epoch << " step " << step << "/" << total_steps << " lr " << lr << " loss "
                    << out.report.total << " (sim " << out.report.sim << ", racl " << out.report.racl << ", v2t "
                    << out.report.v2t << ", t2v " << out.report.t2v << ")";
                log(msg.str());
            }
            if (step % 50 == 0) last_good = make_checkpoint(model.params(), hash, step);
        }
    }
    res.steps = step;
    res.checkpoint = make_checkpoint(model.params(), hash, step);
    if (!out_dir.empty()) {
        write_model_artifacts(out_dir, model, res.checkpoint);
        std::ofstream(out_dir / "losses.csv") << loss_csv(res.curve);
    }
    return res;
}

/// Model for `cfg` with parameters taken from a checkpoint.
template <class T>
std::unique_ptr<FocusModel<T>> restore_model(const TrainConfig& cfg, const PreparedData<T>& data, const Checkpoint& ck,
                                             bool force = false) {
    auto model = std::make_unique<FocusModel<T>>(cfg, data.schema, data.render.height, data.render.width);
    load_checkpoint_into(ck, model->params(), config_hash(cfg, data.schema), force);
    return model;
}

// Inference ----------------------------------------------------------------------

/// Cosine similarity between each image's attribute-level visual feature and
/// the attribute's text feature: rows follow `rows`, columns follow `ids`.
template <class T>
Matrix<double> cosine_scores(const FocusModel<T>& model, const PreparedData<T>& data,
                             const std::vector<std::size_t>& rows, const std::vector<int>& ids,
                             const std::vector<int>& seen) {
    Matrix<T> text, queries;
    T scale{};
    {
        Tape<T> tp(false);
        auto ctx = model.text_context(tp, ids, seen);
        text = ctx.text.value();
        if (model.config().ablation.avfe) queries = ctx.queries.value();
        scale = ctx.logit_scale.item();
    }
    Matrix<double> out(rows.size(), ids.size());
    parallel_chunks(rows.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Tape<T> tp(false);
            TextContext<T> ctx;
            ctx.ids = ids;
            ctx.text = tp.constant(text);
            if (!queries.empty()) ctx.queries = tp.constant(queries);
            ctx.logit_scale = tp.constant(Matrix<T>(1, 1, scale));
            auto f = model.forward_image(tp, data.patches[rows[i]], ctx);
            const auto& s = f.scores.value();
            for (std::size_t j = 0; j < ids.size(); ++j) out(i, j) = double(s[j]) / double(scale);
        }
    });
    return out;
}

/// Pooled attention maps Ḡ (|ids|×K) of one image.
template <class T>
Matrix<double> attention_map(const FocusModel<T>& model, const Matrix<T>& patches, const std::vector<int>& ids,
                             const std::vector<int>& seen) {
    require(model.config().ablation.avfe, "attention maps need the cross-attention component");
    Tape<T> tp(false);
    auto ctx = model.text_context(tp, ids, seen);
    auto f = model.forward_image(tp, patches, ctx);
    return f.pooled->value().template cast<double>();
}

/// Mean cosine between pooled attention maps of same-region attribute pairs
/// minus that of cross-region pairs, averaged over the images of a split.
template <class T>
double region_attention_gap(const FocusModel<T>& model, const PreparedData<T>& data, Split split,
                            const std::vector<int>& ids) {
    const auto& rows = data.split(split);
    require(!rows.empty(), "attention gap: split " + to_string(split) + " is empty");
    std::vector<double> gaps(rows.size(), 0.0);
    parallel_chunks(rows.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const Matrix<double> g = attention_map(model, data.patches[rows[r]], ids, data.seen);
            double within = 0, cross = 0;
            std::size_t nw = 0, nc = 0;
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < ids.size(); ++j) {
                    if (i == j) continue;
                    double dot = 0, ni = 0, nj = 0;
                    for (std::size_t k = 0; k < g.cols(); ++k) {
                        dot += g(i, k) * g(j, k);
                        ni += g(i, k) * g(i, k);
                        nj += g(j, k) * g(j, k);
                    }
                    const double c = dot / std::sqrt(ni * nj);
                    if (data.schema.at(ids[i]).region == data.schema.at(ids[j]).region) {
                        within += c;
                        ++nw;
                    } else {
                        cross += c;
                        ++nc;
                    }
                }
            gaps[r] = (nw ? within / double(nw) : 0.0) - (nc ? cross / double(nc) : 0.0);
        }
    });
    return std::accumulate(gaps.begin(), gaps.end(), 0.0) / double(gaps.size());
}

/// Per-attribute thresholds maximizing balanced accuracy on one split.
inline std::vector<double> calibrate_thresholds(const Matrix<double>& cos, const BinaryMatrix& labels) {
    std::vector<double> th(cos.cols(), 0.0);
    for (std::size_t j = 0; j < cos.cols(); ++j) {
        std::vector<double> vals;
        std::size_t p = 0;
        for (std::size_t i = 0; i < cos.rows(); ++i) {
            vals.push_back(cos(i, j));
            p += labels(i, j) ? 1 : 0;
        }
        const std::size_t n = cos.rows() - p;
        if (p == 0 || n == 0) continue;
        std::sort(vals.begin(), vals.end());
        double best = -1;
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            const double t = 0.5 * (vals[k] + vals[k + 1]);
            std::size_t tp = 0, tn = 0;
            for (std::size_t i = 0; i < cos.rows(); ++i) {
                const bool pr = cos(i, j) > t;
                tp += (pr && labels(i, j)) ? 1 : 0;
                tn += (!pr && !labels(i, j)) ? 1 : 0;
            }
            const double ba = 0.5 * (double(tp) / double(p) + double(tn) / double(n));
            if (ba > best) {
                best = ba;
                th[j] = t;
            }
        }
    }
    return th;
}

/// Closed-set metrics over `ids` on one split; decisions are cos > threshold.
/// Recall@1/2 rank all of `ids` per image.
template <class T>
MetricsReport evaluate_closed(const FocusModel<T>& model, const PreparedData<T>& data, Split split,
                              const std::vector<int>& ids, const std::vector<double>& thresholds) {
    const auto& rows = data.split(split);
    require(!rows.empty(), "evaluate: split " + to_string(split) + " is empty");
    require(thresholds.size() == ids.size(), "evaluate: one threshold per attribute required");
    const Matrix<double> cos = cosine_scores(model, data, rows, ids, data.seen);
    const BinaryMatrix y = binary_block(data.labels, rows, ids);
    BinaryMatrix pred(rows.size(), ids.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < ids.size(); ++j) pred(i, j) = cos(i, j) > thresholds[j] ? 1 : 0;
    MetricsReport r = closed_set_metrics(pred, y);
    const auto rk = recall_at_k(cos, y, {1, 2});
    r.r_at_1 = rk[0];
    r.r_at_2 = rk[1];
    return r;
}

template <class T>
MetricsReport evaluate_closed(const FocusModel<T>& model, const PreparedData<T>& data, Split split) {
    const auto& cfg = model.config();
    std::vector<double> th(data.seen.size(), cfg.threshold);
    if (cfg.calibrate_threshold && !data.val.empty()) {
        const Matrix<double> cos = cosine_scores(model, data, data.val, data.seen, data.seen);
        th = calibrate_thresholds(cos, binary_block(data.labels, data.val, data.seen));
    }
    return evaluate_closed(model, data, split, data.seen, th);
}

/// Recall@K with explicit candidate groups (attribute ids) and the set of
/// attributes whose positive pairs are counted. Unseen attributes are
/// embedded through the region-averaged prompt.
template <class T>
std::vector<double> evaluate_retrieval(const FocusModel<T>& model, const PreparedData<T>& data, Split split,
                                       const std::vector<std::vector<int>>& groups, const std::vector<int>& counted,
                                       const std::vector<int>& ks) {
    const auto& rows = data.split(split);
    require(!rows.empty(), "retrieval: split " + to_string(split) + " is empty");
    std::vector<int> ids;
    for (const auto& g : groups)
        for (int id : g)
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    require(!ids.empty(), "retrieval: empty candidate set");
    auto col = [&](int id) { return static_cast<int>(std::find(ids.begin(), ids.end(), id) - ids.begin()); };
    std::vector<std::vector<int>> col_groups;
    for (const auto& g : groups) {
        std::vector<int> cg;
        for (int id : g) cg.push_back(col(id));
        col_groups.push_back(std::move(cg));
    }
    std::vector<bool> counted_cols(ids.size(), false);
    for (int id : counted) {
        const int c = col(id);
        if (static_cast<std::size_t>(c) < ids.size()) counted_cols[static_cast<std::size_t>(c)] = true;
    }
    const Matrix<double> cos = cosine_scores(model, data, rows, ids, data.seen);
    return recall_at_k(cos, binary_block(data.labels, rows, ids), col_groups, counted_cols, ks);
}

/// Open-domain protocol: per region, rank that region's value attributes
/// (seen and unseen); count only pairs whose positive attribute is unseen.
template <class T>
std::vector<double> evaluate_open_domain(const FocusModel<T>& model, const PreparedData<T>& data, Split split,
                                         const std::vector<int>& ks) {
    require(!data.unseen.empty(), "open-domain evaluation needs held-out attributes");
    std::vector<std::vector<int>> groups;
    for (const auto& r : data.schema.regions()) groups.push_back(data.schema.ids_in_region(r, AttributeKind::value));
    return evaluate_retrieval(model, data, split, groups, data.unseen, ks);
}

/// Expected Recall@1 of a uniformly random ranking under the open-domain protocol.
template <class T>
double open_domain_random_baseline(const PreparedData<T>& data, Split split) {
    double sum = 0;
    std::size_t pairs = 0;
    for (auto row : data.split(split))
        for (int id : data.unseen)
            if (data.labels(row, static_cast<std::size_t>(id))) {
                sum += 1.0 / double(data.schema.ids_in_region(data.schema.at(id).region, AttributeKind::value).size());
                ++pairs;
            }
    return pairs ? sum / double(pairs) : 0.0;
}

inline std::string metrics_csv_header() { return "split,mA,acc,prec,recall,f1,r@1,r@2"; }

inline std::string metrics_csv_row(const std::string& split, const MetricsReport& r) {
    std::ostringstream out;
    out << std::setprecision(6) << std::fixed << split << ',' << r.mA << ',' << r.acc << ',' << r.prec << ','
        << r.recall << ',' << r.f1 << ',' << r.r_at_1 << ',' << r.r_at_2;
    return out.str();
}

// Gradient check ------------------------------------------------------------------

struct GradCheckOptions {
    double step = 1e-3;
    int coords_per_group = 10;
    double tolerance = 1e-4;
    double abs_floor = 1e-8;  // below this magnitude both gradients count as zero
    double group_floor = 1e-2;  // denominator floor, as a fraction of the group's largest |gradient|
    std::uint64_t seed = 0;
    bool corrupt = false;     // negative control: perturbs the analytic gradient
};

struct GradCheckGroup {
    std::string name;
    double max_rel_error = 0;
    double max_pointwise_error = 0;  // plain |a − n| / max(|a|, |n|), no group floor
    int checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double worst = 0;
    double worst_pointwise = 0;
    bool passed = true;
};

/// |a − n| / max(|a|, |n|, scale_floor). When both magnitudes are under
/// `zero_floor` the gradients count as zero and are compared absolutely.
inline double grad_relative_error(double analytic, double numeric, double zero_floor, double scale_floor = 0.0) {
    const double diff = std::abs(analytic - numeric);
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    if (mag < zero_floor) return diff < zero_floor ? 0.0 : diff / zero_floor;
    return diff / std::max(mag, scale_floor);
}

/// Central differences on random coordinates of every parameter group versus
/// the tape gradients of each output of `outputs_fn`. One perturbation sweep
/// serves every output. The truncation error of the difference quotient does
/// not shrink with the gradient, so coordinates whose gradient is tiny next to
/// the rest of their group are measured against the group scale.
template <class OutputsFn>
std::vector<GradCheckReport> grad_check_outputs(ParamStore<double>& params, OutputsFn&& outputs_fn,
                                                const GradCheckOptions& opt) {
    std::size_t n_out = 0;
    {
        Tape<double> tp(false);
        n_out = outputs_fn(tp).size();
    }
    require(n_out > 0, "grad_check: no outputs");
    std::vector<std::vector<Matrix<double>>> analytic(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
        params.zero_grad();
        Tape<double> tp;
        auto outs = outputs_fn(tp);
        tp.backward(outs[o]);
        for (std::size_t g = 0; g < params.size(); ++g) analytic[o].push_back(params[g].grad);
    }
    params.zero_grad();
    auto eval = [&] {
        Tape<double> tp(false);
        std::vector<double> v;
        for (const auto& x : outputs_fn(tp)) v.push_back(x.item());
        return v;
    };

    std::mt19937_64 rng(opt.seed);
    std::vector<GradCheckReport> reps(n_out);
    for (std::size_t g = 0; g < params.size(); ++g) {
        auto& p = params[g];
        std::vector<std::size_t> coords(p.value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > static_cast<std::size_t>(opt.coords_per_group)) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(static_cast<std::size_t>(opt.coords_per_group));
        }
        std::vector<GradCheckGroup> grp(n_out, GradCheckGroup{p.name, 0.0, 0.0, 0});
        std::vector<double> floor(n_out, 0.0);
        for (std::size_t o = 0; o < n_out; ++o) {
            double scale = 0;
            for (std::size_t k = 0; k < analytic[o][g].size(); ++k) scale = std::max(scale, std::abs(analytic[o][g][k]));
            floor[o] = opt.group_floor * scale;
        }
        for (auto k : coords) {
            const double orig = p.value[k];
            p.value[k] = orig + opt.step;
            const auto up = eval();
            p.value[k] = orig - opt.step;
            const auto down = eval();
            p.value[k] = orig;
            for (std::size_t o = 0; o < n_out; ++o) {
                const double numeric = (up[o] - down[o]) / (2 * opt.step);
                double a = analytic[o][g][k];
                if (opt.corrupt) a = a * 1.01 + 1e-3;
                auto& r = grp[o];
                r.max_rel_error = std::max(r.max_rel_error, grad_relative_error(a, numeric, opt.abs_floor, floor[o]));
                r.max_pointwise_error = std::max(r.max_pointwise_error, grad_relative_error(a, numeric, opt.abs_floor));
                ++r.checked;
            }
        }
        for (std::size_t o = 0; o < n_out; ++o) {
            reps[o].worst = std::max(reps[o].worst, grp[o].max_rel_error);
            reps[o].worst_pointwise = std::max(reps[o].worst_pointwise, grp[o].max_pointwise_error);
            reps[o].groups.push_back(std::move(grp[o]));
        }
    }
    for (auto& r : reps) r.passed = r.worst < opt.tolerance;
    return reps;
}

template <class LossFn>
GradCheckReport grad_check(ParamStore<double>& params, LossFn&& loss_fn, const GradCheckOptions& opt) {
    return grad_check_outputs(
        params, [&](Tape<double>& tp) { return std::vector<Var<double>>{loss_fn(tp)}; }, opt)[0];
}

/// Grad-check of the model objective (optionally re-weighted) on a fixed batch.
inline GradCheckReport grad_check_model(FocusModel<double>& model, const PreparedData<double>& data,
                                        const std::vector<std::size_t>& rows, const GradCheckOptions& opt,
                                        std::optional<LossWeights> weights = std::nullopt) {
    std::vector<const Matrix<double>*> imgs;
    for (auto r : rows) imgs.push_back(&data.patches[r]);
    const Matrix<double> y = label_block<double>(data.labels, rows, data.seen);
    return grad_check(
        model.params(),
        [&](Tape<double>& tp) { return model.batch_loss(tp, imgs, y, data.seen, data.seen, weights).total; }, opt);
}

/// Reports for L_total, L_sim, L_racl, L_v2t and L_t2v, in that order.
inline std::vector<std::pair<std::string, GradCheckReport>> grad_check_model_terms(
    FocusModel<double>& model, const PreparedData<double>& data, const std::vector<std::size_t>& rows,
    const GradCheckOptions& opt) {
    std::vector<const Matrix<double>*> imgs;
    for (auto r : rows) imgs.push_back(&data.patches[r]);
    const Matrix<double> y = label_block<double>(data.labels, rows, data.seen);
    auto reps = grad_check_outputs(
        model.params(),
        [&](Tape<double>& tp) {
            auto b = model.batch_loss(tp, imgs, y, data.seen, data.seen);
            return std::vector<Var<double>>{b.total, b.terms.sim, b.terms.racl, b.terms.v2t, b.terms.t2v};
        },
        opt);
    const char* names[] = {"total", "sim", "racl", "v2t", "t2v"};
    std::vector<std::pair<std::string, GradCheckReport>> out;
    for (std::size_t i = 0; i < reps.size(); ++i) out.emplace_back(names[i], std::move(reps[i]));
    return out;
}

// Ablations -------------------------------------------------------------------------

struct AblationRow {
    std::string name;
    Ablation flags;
    MetricsReport metrics;
};

/// The five component combinations, from bare baseline to the full model.
inline std::vector<std::pair<std::string, Ablation>> ablation_rows() {
    return {
        {"baseline", {false, false, false, false}},
        {"rlp", {true, false, false, false}},
        {"rlp+mgmt", {true, true, false, false}},
        {"rlp+mgmt+avfe", {true, true, true, false}},
        {"full", {true, true, true, true}},
    };
}

template <class T>
std::vector<AblationRow> run_ablation_suite(const TrainConfig& base, const PreparedData<T>& data, Split split,
                                            const Logger& log = nullptr) {
    std::vector<AblationRow> out;
    for (const auto& [name, flags] : ablation_rows()) {
        TrainConfig cfg = base;
        cfg.ablation = flags;
        if (log) log("ablation row " + name);
        auto res = train(cfg, data, {}, log);
        out.push_back({name, flags, evaluate_closed(*res.model, data, split)});
    }
    return out;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "row,rlp,mgmt,avfe,racl,mA,acc,prec,recall,f1\n" << std::setprecision(6) << std::fixed;
    for (const auto& r : rows)
        out << r.name << ',' << r.flags.rlp << ',' << r.flags.mgmt << ',' << r.flags.avfe << ',' << r.flags.racl << ','
            << r.metrics.mA << ',' << r.metrics.acc << ',' << r.metrics.prec << ',' << r.metrics.recall << ','
            << r.metrics.f1 << '\n';
    return out.str();
}

}  // namespace focuspar
