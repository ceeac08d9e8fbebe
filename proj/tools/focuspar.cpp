// focuspar: data generation, training, evaluation and diagnostics.

#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include <CLI11.hpp>

#include "focuspar/focuspar.hpp"

namespace fs = std::filesystem;
using namespace focuspar;

namespace {

struct Options {
    std::string config, out = "out", ckpt, data, split = "test", open_domain, attrs;
    std::vector<std::string> overrides;
    std::vector<int> ks{1, 2};
    std::uint64_t seed = 0;
    bool seed_set = false;
    double tol = 1e-4;
    int batch = 2;
    int index = 0;
    int global_subset_count = -2;
    bool corrupt_grad = false, calibrate = false, freeze_text = false, shared_prompts = false, mix_sees_mix = false,
         force = false;
};

void log_line(const std::string& msg) { std::cerr << "[focuspar] " << msg << '\n'; }

nlohmann::json read_json(const fs::path& p) {
    try {
        return nlohmann::json::parse(slurp(p));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("cannot parse " + p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + p.string());
    f << text;
}

/// Training config: defaults, then --config file (or the checkpoint's
/// config.json), then flags, then key=value overrides.
TrainConfig resolve_config(const Options& o) {
    TrainConfig cfg;
    if (!o.config.empty()) apply_json(cfg, read_json(o.config));
    else if (!o.ckpt.empty() && fs::exists(fs::path(o.ckpt).parent_path() / "config.json"))
        apply_json(cfg, read_json(fs::path(o.ckpt).parent_path() / "config.json"));
    if (!o.data.empty()) cfg.data_dir = o.data;
    if (o.seed_set) cfg.seed = o.seed;
    if (o.freeze_text) cfg.freeze_text = true;
    if (o.shared_prompts) cfg.model.shared_prompts = true;
    if (o.mix_sees_mix) cfg.model.mix_sees_mix = true;
    if (o.global_subset_count != -2) cfg.model.global_subset_count = o.global_subset_count;
    if (o.calibrate) cfg.calibrate_threshold = true;
    for (const auto& kv : o.overrides) apply_override(cfg, kv);
    validate(cfg);
    log_line("config " + to_json(cfg).dump());
    log_line("seed " + std::to_string(cfg.seed));
    return cfg;
}

template <class T>
PreparedData<T> load_data(const TrainConfig& cfg) {
    const auto m = load_dataset(cfg.data_dir);
    log_line("dataset " + cfg.data_dir + " (" + std::to_string(m.entries.size()) + " samples, manifest " +
             m.manifest_hash.substr(0, 16) + ")");
    return prepare_data<T>(m, cfg.model.patch, cfg.holdout);
}

template <class T>
std::unique_ptr<FocusModel<T>> load_model(const Options& o, const TrainConfig& cfg, const PreparedData<T>& data) {
    require(!o.ckpt.empty(), "--ckpt is required");
    auto model = restore_model(cfg, data, load_checkpoint(o.ckpt), o.force);
    const fs::path vocab = fs::path(o.ckpt).parent_path() / "vocab.txt";
    if (fs::exists(vocab))
        require(Vocabulary::load(vocab) == model->vocab(), "vocabulary in " + vocab.string() + " does not match schema");
    return model;
}

int cmd_gen_data(const Options& o) {
    DatasetConfig dc;
    nlohmann::json j = dc;
    if (!o.config.empty()) j.merge_patch(read_json(o.config));
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        require(eq != std::string::npos && eq > 0, "override must be key=value: " + kv);
        const std::string key = kv.substr(0, eq);
        nlohmann::json v;
        try {
            v = nlohmann::json::parse(kv.substr(eq + 1));
        } catch (const nlohmann::json::exception&) {
            v = kv.substr(eq + 1);
        }
        nlohmann::json::json_pointer ptr("/" + std::regex_replace(key, std::regex("\\."), "/"));
        require(j.contains(ptr), "unknown dataset key: " + key);
        j[ptr] = v;
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        require(nlohmann::json(dc).contains(it.key()), "unknown dataset key: " + it.key());
    try {
        dc = j.get<DatasetConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad dataset config: ") + e.what());
    }
    if (o.seed_set) dc.seed = o.seed;
    log_line("config " + nlohmann::json(dc).dump());
    log_line("seed " + std::to_string(dc.seed));
    const auto m = generate_dataset(dc, o.out);
    std::cout << "samples," << m.entries.size() << "\nmanifest," << m.manifest_hash << '\n';
    return 0;
}

int cmd_train(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto data = load_data<float>(cfg);
    auto res = train(cfg, data, o.out, log_line);
    std::ostringstream csv;
    csv << metrics_csv_header() << '\n';
    for (Split s : {Split::val, Split::test})
        if (!data.split(s).empty()) csv << metrics_csv_row(to_string(s), evaluate_closed(*res.model, data, s)) << '\n';
    write_text(fs::path(o.out) / "metrics.csv", csv.str());
    std::cout << csv.str();
    return 0;
}

int cmd_eval(const Options& o) {
    auto cfg = resolve_config(o);
    if (!o.open_domain.empty()) {
        const auto j = read_json(o.open_domain);
        require(j.is_object() && j.contains("holdout") && j["holdout"].is_number_integer(),
                "open-domain spec must be {\"holdout\": n}");
        cfg.holdout = j["holdout"].get<int>();
    }
    const auto data = load_data<float>(cfg);
    const auto model = load_model(o, cfg, data);
    const Split split = parse_split(o.split);
    auto rep = evaluate_closed(*model, data, split);
    if (!o.open_domain.empty()) {
        const auto r = evaluate_open_domain(*model, data, split, {1, 2});
        rep.r_at_1 = r[0];
        rep.r_at_2 = r[1];
        log_line("open-domain random baseline R@1 " + std::to_string(open_domain_random_baseline(data, split)));
    }
    if (!rep.excluded.empty()) log_line("warning: " + std::to_string(rep.excluded.size()) + " attribute(s) excluded from mA");
    const std::string csv = metrics_csv_header() + "\n" + metrics_csv_row(o.split, rep) + "\n";
    write_text(fs::path(o.out) / "metrics.csv", csv);
    std::cout << csv;
    return 0;
}

std::vector<int> parse_attr_list(const std::string& list, const AttributeSchema& schema) {
    std::vector<int> ids;
    std::stringstream ss(list);
    for (std::string tok; std::getline(ss, tok, ',');) {
        if (tok.empty()) continue;
        int found = -1;
        for (const auto& a : schema.attributes())
            if (a.name() == tok || std::to_string(a.id) == tok) found = a.id;
        require(found >= 0, "unknown attribute: " + tok);
        ids.push_back(found);
    }
    return ids;
}

int cmd_retrieve(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto data = load_data<float>(cfg);
    const auto model = load_model(o, cfg, data);
    const auto ids = o.attrs.empty() ? data.schema.all_ids() : parse_attr_list(o.attrs, data.schema);
    require(!ids.empty(), "retrieve: empty candidate set");
    const auto r = evaluate_retrieval(*model, data, parse_split(o.split), {ids}, ids, o.ks);
    std::ostringstream csv;
    csv << "k,recall\n" << std::setprecision(6) << std::fixed;
    for (std::size_t i = 0; i < o.ks.size(); ++i) csv << o.ks[i] << ',' << r[i] << '\n';
    write_text(fs::path(o.out) / "retrieval.csv", csv.str());
    std::cout << csv.str();
    return 0;
}

int cmd_gradcheck(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto data = load_data<double>(cfg);
    std::unique_ptr<FocusModel<double>> model =
        o.ckpt.empty() ? std::make_unique<FocusModel<double>>(cfg, data.schema, data.render.height, data.render.width)
                       : load_model(o, cfg, data);
    require(o.batch >= 1 && static_cast<std::size_t>(o.batch) <= data.train.size(), "gradcheck: bad --batch");
    const std::vector<std::size_t> rows(data.train.begin(), data.train.begin() + o.batch);
    GradCheckOptions opt;
    opt.tolerance = o.tol;
    opt.seed = cfg.seed;
    opt.corrupt = o.corrupt_grad;
    const auto rep = grad_check_model(*model, data, rows, opt);
    std::ostringstream csv;
    csv << "group,checked,max_rel_error,max_pointwise_error\n" << std::setprecision(3) << std::scientific;
    for (const auto& g : rep.groups) csv << g.name << ',' << g.checked << ',' << g.max_rel_error << ',' << g.max_pointwise_error << '\n';
    write_text(fs::path(o.out) / "gradcheck.csv", csv.str());
    std::cout << csv.str();
    if (!rep.passed) throw NumericalError("gradient check failed: max relative error " + std::to_string(rep.worst));
    log_line("gradient check passed, max relative error " + std::to_string(rep.worst));
    return 0;
}

int cmd_ablate(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto data = load_data<float>(cfg);
    const auto rows = run_ablation_suite(cfg, data, parse_split(o.split), log_line);
    const std::string csv = ablation_csv(rows);
    write_text(fs::path(o.out) / "ablation.csv", csv);
    std::cout << csv;
    return 0;
}

int cmd_dump_attn(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto data = load_data<float>(cfg);
    const auto model = load_model(o, cfg, data);
    const auto& rows = data.split(parse_split(o.split));
    require(o.index >= 0 && static_cast<std::size_t>(o.index) < rows.size(), "dump-attn: --index out of range");
    const auto g = attention_map(*model, data.patches[rows[static_cast<std::size_t>(o.index)]], data.seen, data.seen);
    std::ostringstream csv;
    csv << "attribute";
    for (std::size_t k = 0; k < g.cols(); ++k) csv << ",m" << k;
    csv << '\n' << std::setprecision(6) << std::fixed;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        csv << data.schema.at(data.seen[i]).name();
        for (std::size_t k = 0; k < g.cols(); ++k) csv << ',' << g(i, k);
        csv << '\n';
    }
    write_text(fs::path(o.out) / "attn.csv", csv.str());
    std::cout << csv.str();
    return 0;
}

std::string one_line(std::string s) {
    for (auto& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"focuspar: attribute recognition with mix tokens and attribute-guided cross-attention"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config file");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--seed", o.seed, "random seed")->each([&](const std::string&) { o.seed_set = true; });
        sub->add_option("overrides", o.overrides, "key=value config overrides");
    };
    auto model_flags = [&](CLI::App* sub) {
        sub->add_option("--data", o.data, "dataset directory (data.dir)");
        sub->add_flag("--freeze-text", o.freeze_text, "keep the text encoder fixed");
        sub->add_flag("--shared-prompts", o.shared_prompts, "one prompt block for all attributes");
        sub->add_flag("--mix-sees-mix", o.mix_sees_mix, "let mix tokens attend to each other");
        sub->add_option("--global-subset-count", o.global_subset_count, "global tokens see only the first n subsets");
        sub->add_flag("--calibrate-threshold", o.calibrate, "fit per-attribute thresholds on the val split");
    };
    auto ckpt_flags = [&](CLI::App* sub, bool required) {
        auto* opt = sub->add_option("--ckpt", o.ckpt, "checkpoint file");
        if (required) opt->required();
        sub->add_flag("--force", o.force, "load despite a config-hash mismatch");
    };

    auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset");
    common(gen);
    auto* tr = app.add_subcommand("train", "train a model");
    common(tr);
    model_flags(tr);
    auto* ev = app.add_subcommand("eval", "closed-set metrics (and open-domain recall)");
    common(ev);
    model_flags(ev);
    ckpt_flags(ev, true);
    ev->add_option("--split", o.split, "train, val or test");
    ev->add_option("--open-domain", o.open_domain, "JSON {\"holdout\": n}: score unseen attributes");
    auto* rt = app.add_subcommand("retrieve", "image-to-text Recall@K");
    common(rt);
    model_flags(rt);
    ckpt_flags(rt, true);
    rt->add_option("--split", o.split, "train, val or test");
    rt->add_option("--attrs", o.attrs, "comma-separated attribute names or ids (default: all)");
    rt->add_option("--k", o.ks, "K values")->delimiter(',');
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check in float64");
    common(gc);
    model_flags(gc);
    ckpt_flags(gc, false);
    gc->add_option("--tol", o.tol, "relative error tolerance");
    gc->add_option("--batch", o.batch, "images in the checked batch");
    gc->add_flag("--corrupt-grad", o.corrupt_grad, "perturb analytic gradients (negative control)");
    auto* ab = app.add_subcommand("ablate", "train and evaluate the five component combinations");
    common(ab);
    model_flags(ab);
    ab->add_option("--split", o.split, "evaluation split");
    auto* da = app.add_subcommand("dump-attn", "pooled attention maps of one image");
    common(da);
    model_flags(da);
    ckpt_flags(da, true);
    da->add_option("--split", o.split, "train, val or test");
    da->add_option("--index", o.index, "image index within the split");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error=usage message=\"" << one_line(e.what()) << "\"\n";
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o);
        if (tr->parsed()) return cmd_train(o);
        if (ev->parsed()) return cmd_eval(o);
        if (rt->parsed()) return cmd_retrieve(o);
        if (gc->parsed()) return cmd_gradcheck(o);
        if (ab->parsed()) return cmd_ablate(o);
        if (da->parsed()) return cmd_dump_attn(o);
    } catch (const NumericalError& e) {
        std::cerr << "error=numerical message=\"" << one_line(e.what()) << "\"\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error=validation message=\"" << one_line(e.what()) << "\"\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error=validation message=\"" << one_line(e.what()) << "\"\n";
        return 1;
    }
    return 1;
}
