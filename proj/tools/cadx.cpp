// cadx command-line tool.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cadx/cadx.hpp"
#include "cadx/service/http.hpp"

namespace fs = std::filesystem;
using namespace cadx;

namespace {

struct Globals {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string log_level = "info";
};

/// Settings shared by the subcommands, read once from the config file.
struct Context {
    Config cfg;
    risk::ScoreTable table = risk::default_score_table();
    imaging::FeatureConfig features;
    imaging::GridSize grid;
    explain::SynonymTable synonyms = explain::SynonymTable::defaults();
    std::uint64_t seed = 1;

    static Context load(const Globals& g) {
        Context c;
        c.seed = g.seed;
        fs::path path = g.config_path;
        if (path.empty()) {
            const fs::path fallback = fs::path(CADX_CONFIG_DIR) / "cadx.conf";
            if (fs::exists(fallback)) path = fallback;
        }
        if (!path.empty()) {
            c.cfg = Config::load(path);
            spdlog::debug("config {}", path.string());
        }
        if (auto t = c.cfg.get_path("score_table")) c.table = risk::ScoreTable::load(*t);
        c.features = imaging::FeatureConfig::from(c.cfg);
        c.grid.cols = static_cast<int>(c.cfg.get_int("heatmap.grid_cols", c.grid.cols));
        c.grid.rows = static_cast<int>(c.cfg.get_int("heatmap.grid_rows", c.grid.rows));
        c.synonyms = explain::SynonymTable::from(c.cfg);
        return c;
    }

    /// Applies config overrides of fusion_lambda / decision_threshold.
    [[nodiscard]] risk::RiskModel model(const fs::path& path) const {
        auto m = risk::load_model(path);
        if (cfg.contains("fusion_lambda")) m.fusion_lambda = cfg.get_double("fusion_lambda", m.fusion_lambda);
        if (cfg.contains("decision_threshold")) m.decision_threshold = cfg.get_double("decision_threshold", m.decision_threshold);
        m.validate();
        return m;
    }
};

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

ingest::CaseSet retained_cases(const fs::path& path, bool strict = true) {
    auto cs = ingest::load_cases(path, strict);
    for (const auto& issue : cs.issues) spdlog::warn("{}:{}: skipped: {}", path.string(), issue.line, issue.message);
    auto rep = ingest::apply_exclusions(cs);
    for (const auto& e : rep.excluded) spdlog::info("excluded {} ({})", e.case_id, ingest::to_string(e.reason));
    return rep.retained;
}

const ingest::CaseRecord& require_case(const ingest::CaseSet& cs, const std::string& id) {
    const auto* c = cs.find(id);
    if (!c) fail(ErrorCode::UnknownCase, "no case '" + id + "' in " + cs.name);
    return *c;
}

struct CasePixels {
    std::optional<imaging::Image> image;
    std::optional<imaging::Mask> mask;
};

CasePixels pixels_of(const ingest::CaseRecord& c, const fs::path& base) {
    CasePixels p;
    p.image = ingest::case_image(c, base);
    if (p.image) p.mask = ingest::case_mask(c, base, p.image->width, p.image->height);
    return p;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const Context&, const fs::path& in, bool lenient, const std::string& out, const std::string& report) {
    auto cs = ingest::load_cases(in, !lenient);
    for (const auto& issue : cs.issues) std::printf("line %zu: %s\n", issue.line, issue.message.c_str());
    std::size_t violations = 0;
    for (const auto& c : cs.cases) {
        for (const auto& field : ingest::verify_anonymization(c)) {
            std::printf("%s: identifying field '%s'\n", c.case_id.c_str(), field.c_str());
            ++violations;
        }
    }
    const auto rep = ingest::apply_exclusions(cs);
    nlohmann::json j = {{"loaded", cs.size()}, {"retained", rep.retained.size()}, {"malformed_lines", cs.issues.size()},
                        {"anonymization_violations", violations}};
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& e : rep.excluded) ex.push_back({{"case_id", e.case_id}, {"reason", std::string(ingest::to_string(e.reason))}});
    j["excluded"] = ex;
    std::printf("%zu loaded, %zu retained, %zu excluded, %zu anonymization violations\n", cs.size(), rep.retained.size(),
                rep.excluded.size(), violations);
    for (const auto& e : rep.excluded) std::printf("  excluded %s: %s\n", e.case_id.c_str(), std::string(ingest::to_string(e.reason)).c_str());
    if (!out.empty()) {
        auto retained = rep.retained;
        // image_ref paths stay valid only if written next to the input
        ingest::save_cases(retained, out);
    }
    if (!report.empty()) write_json(report, j);
    return violations ? 3 : 0;
}

int cmd_split(const Context& ctx, const fs::path& in, const fs::path& out_dir, std::vector<double> fractions, bool stratified) {
    if (fractions.empty()) {
        fractions = {ctx.cfg.get_double("split.train", 0.8), ctx.cfg.get_double("split.test1", 0.1),
                     ctx.cfg.get_double("split.test2", 0.1)};
        stratified = stratified || ctx.cfg.get_bool("split.stratified", false);
    }
    if (fractions.size() != 3) fail(ErrorCode::BadFractions, "--fractions takes three values");
    const auto cs = retained_cases(in);
    const auto s = ingest::split_dataset(cs, {fractions[0], fractions[1], fractions[2]}, ctx.seed, stratified);
    fs::create_directories(out_dir);
    // keep image references resolvable from the output directory
    auto rebase = [&](ingest::CaseSet part) {
        for (auto& c : part.cases) {
            if (c.image_ref) c.image_ref = fs::relative(fs::absolute(cs.base_dir / *c.image_ref), fs::absolute(out_dir)).string();
            if (c.mask_ref) c.mask_ref = fs::relative(fs::absolute(cs.base_dir / *c.mask_ref), fs::absolute(out_dir)).string();
        }
        return part;
    };
    ingest::save_cases(rebase(s.train), out_dir / "train.jsonl");
    ingest::save_cases(rebase(s.test1), out_dir / "test1.jsonl");
    ingest::save_cases(rebase(s.test2), out_dir / "test2.jsonl");
    write_json(out_dir / "split_report.json", ingest::split_report(s));
    std::printf("train %zu, test1 %zu, test2 %zu (seed %llu, %s)\n", s.train.size(), s.test1.size(), s.test2.size(),
                static_cast<unsigned long long>(ctx.seed), s.generator.c_str());
    return 0;
}

int cmd_train(const Context& ctx, const fs::path& in, const fs::path& out, int augment_copies) {
    const auto cs = retained_cases(in);
    std::vector<risk::LabeledFeatures> rows;
    auto aug = imaging::AugSpec::from(ctx.cfg);
    std::mt19937_64 rng(ctx.seed);
    for (const auto& c : cs.cases) {
        const bool malignant = *c.pathology == Label::malignant;
        rows.push_back({ingest::case_features(c, cs.base_dir, ctx.features), malignant});
        if (augment_copies <= 0) continue;
        const auto px = pixels_of(c, cs.base_dir);
        if (!px.image || !px.mask) continue;
        for (int k = 0; k < augment_copies; ++k) {
            aug.seed = rng();
            const auto a = imaging::augment(*px.image, px.mask, aug);
            try {
                rows.push_back({imaging::extract_features(a.image, *a.mask, c.mm_per_pixel, ctx.features), malignant});
            } catch (const Error& e) {
                spdlog::debug("{}: augmented copy dropped: {}", c.case_id, e.what());
            }
        }
    }
    const auto params = risk::TrainParams::from(ctx.cfg);
    const auto result = risk::train_logistic(rows, params);
    risk::save_model(result.model, out);
    std::printf("trained on %zu rows; loss %.4f -> %.4f; wrote %s\n", rows.size(), result.loss_history.front(),
                result.loss_history.back(), out.string().c_str());
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        std::printf("  %-24s %+.4f\n", std::string(kFeatureNames[i]).c_str(), result.model.weights[i]);
    }
    return 0;
}

int cmd_assess(const Context& ctx, const fs::path& model_path, const fs::path& in, const std::string& case_id, bool json) {
    const auto model = ctx.model(model_path);
    const auto cs = ingest::load_cases(in);
    std::vector<int> labels;
    std::vector<double> scores;
    for (const auto& c : cs.cases) {
        if (!case_id.empty() && c.case_id != case_id) continue;
        const auto a = risk::predict_risk(model, ingest::case_features(c, cs.base_dir, ctx.features), ctx.table);
        if (json) {
            std::printf("%s\n", nlohmann::json{{"case_id", c.case_id}, {"assessment", a}}.dump().c_str());
        } else {
            std::printf("%s: %s\n", c.case_id.c_str(), explain::render_rationale(a).c_str());
        }
        if (c.pathology) {
            labels.push_back(*c.pathology == Label::malignant);
            scores.push_back(a.probability);
        }
    }
    if (!case_id.empty() && scores.empty() && !cs.find(case_id)) fail(ErrorCode::UnknownCase, "no case '" + case_id + "'");
    const bool both = std::count(labels.begin(), labels.end(), 1) >= 2 && std::count(labels.begin(), labels.end(), 0) >= 2;
    if (!json && both) {
        const auto roc = stats::delong_ci(scores, labels);
        std::printf("AUC %.4f (95%% CI %.4f-%.4f) over %zu labelled cases\n", roc.auc, roc.ci.lo, roc.ci.hi, labels.size());
    }
    return 0;
}

int cmd_heatmap(const Context& ctx, const fs::path& model_path, const fs::path& in, const std::string& case_id,
                const std::string& out, const std::string& png) {
    const auto model = ctx.model(model_path);
    const auto cs = ingest::load_cases(in);
    const auto& c = require_case(cs, case_id);
    const auto px = pixels_of(c, cs.base_dir);
    if (!px.image || !px.mask) fail(ErrorCode::FeatureExtractionFailed, case_id + ": heatmap needs image and mask");
    const auto h = imaging::occlusion_heatmap(*px.image, *px.mask, model, ctx.table, {ctx.grid, c.mm_per_pixel, ctx.features});
    std::printf("base risk %.3f\n", h.base_risk);
    for (int r = 0; r < h.grid_h; ++r) {
        for (int col = 0; col < h.grid_w; ++col) std::printf("%+7.3f", h.at(col, r));
        std::printf("\n");
    }
    if (!out.empty()) write_json(out, h);
    if (!png.empty()) {
        // overlay: positive cells brighten the image
        imaging::Image shown = *px.image;
        double peak = 0;
        for (double v : h.values) peak = std::max(peak, std::abs(v));
        for (int y = 0; y < shown.height; ++y) {
            for (int x = 0; x < shown.width; ++x) {
                int col = 0, row = 0;
                while (imaging::cell_span(col, h.grid_w, shown.width).second <= x) ++col;
                while (imaging::cell_span(row, h.grid_h, shown.height).second <= y) ++row;
                const double w = peak > 0 ? std::max(0.0, h.at(col, row)) / peak : 0.0;
                shown.at(x, y) = static_cast<std::uint8_t>(std::lround(shown.at(x, y) * (1 - 0.6 * w) + 255 * 0.6 * w));
            }
        }
        imaging::write_bytes(png, imaging::encode_png(shown));
    }
    return 0;
}

int cmd_session(const Context& ctx, const fs::path& model_path, const fs::path& in, const std::string& case_id,
                const std::string& physician, const std::string& log_path) {
    const auto model = ctx.model(model_path);
    const auto cs = retained_cases(in);
    auto s = arbitration::start_review("cli-" + case_id, cs, case_id, physician, model, ctx.table, service::now_ms(), ctx.features);
    std::optional<service::EventLog> log;
    if (!log_path.empty()) log.emplace(log_path);
    auto sync = [&] {
        if (log) log->sync(s);
    };
    sync();
    const auto& c = require_case(cs, case_id);
    const auto px = pixels_of(c, cs.base_dir);
    risk::ImageContext ic;
    if (px.image && px.mask) {
        ic.image = &*px.image;
        ic.mask = &*px.mask;
    }
    ic.mm_per_pixel = c.mm_per_pixel;
    ic.feature_config = ctx.features;
    ic.grid = ctx.grid;
    arbitration::QueryEnvironment env{model, ctx.table, ctx.synonyms, &ic};

    std::printf("case %s  age %d  sex %s\n", c.case_id.c_str(), c.age, std::string(ingest::to_string(c.sex)).c_str());
    std::string line;
    Label initial;
    for (;;) {
        std::printf("initial judgment (benign/malignant): ");
        std::fflush(stdout);
        if (!std::getline(std::cin, line)) return 1;
        if (auto l = parse_label(detail::trim(line))) {
            initial = *l;
            break;
        }
    }
    arbitration::submit_initial(s, {initial, arbitration::Author::physician(physician), service::now_ms()});
    sync();
    std::printf("model: %s\n", explain::render_rationale(s.visible_assessment()).c_str());
    if (s.state() == arbitration::SessionState::Finalized) {
        std::printf("agreement; session finalized as %s\n", std::string(to_string(initial)).c_str());
        return 0;
    }
    std::printf("discrepancy. ask questions (why, show heatmap, confidence, recalculate ignoring <x>, what if <f> = <v>);\n"
                "finish with 'final benign' or 'final malignant'.\n");
    while (std::printf("> "), std::fflush(stdout), std::getline(std::cin, line)) {
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        if (t.substr(0, 6) == "final ") {
            auto l = parse_label(detail::trim(t.substr(6)));
            if (!l) {
                std::printf("final takes benign or malignant\n");
                continue;
            }
            try {
                arbitration::finalize(s, {*l, arbitration::Author::physician(physician), std::max(service::now_ms(), s.last_timestamp())});
            } catch (const Error& e) {
                std::printf("%s\n", e.what());
                continue;
            }
            sync();
            std::printf("finalized as %s%s\n", std::string(to_string(*l)).c_str(), s.revised() ? " (revised)" : "");
            return 0;
        }
        try {
            const auto r = arbitration::interrogate(s, t, env, std::max(service::now_ms(), s.last_timestamp()));
            sync();
            std::printf("%s\n", r.text.c_str());
        } catch (const Error& e) {
            std::printf("%s\n", e.what());
        }
    }
    return 1;
}

readersim::StudyConfig study_config(const Context& ctx, const std::string& study_path) {
    if (!study_path.empty()) return readersim::StudyConfig::from(Config::load(study_path));
    if (auto p = ctx.cfg.get_path("study")) return readersim::StudyConfig::from(Config::load(*p));
    fail(ErrorCode::BadConfig, "no study profiles: pass --study or set 'study' in the config");
}

int cmd_simulate(const Context& ctx, const fs::path& model_path, const fs::path& in, const std::string& study_path,
                 const std::string& out) {
    const auto model = ctx.model(model_path);
    const auto cs = retained_cases(in);
    const auto cfg = study_config(ctx, study_path);
    const auto result = readersim::evaluate_study(cs, cfg, model, ctx.table, ctx.seed, ctx.features);
    const auto report = service::study_report_json(result);
    if (!out.empty()) {
        service::export_study_report(result, out);
        spdlog::info("wrote {}", out);
    }
    std::printf("%s", service::report_summary(report).c_str());
    return 0;
}

int cmd_report(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::FileNotFound, "cannot open " + path.string());
    const auto j = nlohmann::json::parse(in);
    std::printf("%s", service::report_summary(j).c_str());
    return 0;
}

int cmd_serve(const Context& ctx, std::string host, int port, std::string model_path, std::string cases_path,
              std::string log_path) {
    auto sc = service::ServiceConfig::from(ctx.cfg);
    if (host.empty()) host = sc.host;
    if (port < 0) port = sc.port;
    if (model_path.empty() && sc.model_path) model_path = sc.model_path->string();
    if (cases_path.empty() && sc.cases_path) cases_path = sc.cases_path->string();
    if (log_path.empty() && sc.event_log_path) log_path = sc.event_log_path->string();
    if (model_path.empty()) fail(ErrorCode::BadConfig, "serve needs a model (--model or 'model' in the config)");

    service::Store store(ctx.model(model_path), ctx.table, ctx.synonyms, ctx.features, ctx.grid);
    if (!cases_path.empty()) {
        const auto r = store.add_cases(ingest::load_cases(cases_path));
        spdlog::info("{} cases loaded, {} excluded", r.retained.size(), r.excluded.size());
    }
    if (!log_path.empty()) {
        store.attach_log(log_path);
        spdlog::info("event log {} ({} sessions replayed)", log_path, store.session_ids().size());
    }
    service::Api api(store);
    httplib::Server server;
    service::mount(server, api, [](const service::ApiRequest& req, const service::ApiResponse& res) {
        spdlog::info("{} {} -> {}", req.method, req.path, res.status);
    });
    spdlog::info("listening on {}:{}", host, port);
    service::serve(server, host, port);
    return 0;
}

int cmd_synth(const Context& ctx, const fs::path& out_dir, std::size_t n, double malignant_fraction, double exclusion_rate) {
    synth::SynthSpec spec;
    spec.cases = n;
    spec.malignant_fraction = malignant_fraction;
    spec.exclusion_rate = exclusion_rate;
    spec.seed = ctx.seed;
    const auto path = synth::write_dataset(spec, out_dir);
    std::printf("wrote %zu cases to %s\n", n, path.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cadx: explainable thyroid-nodule risk assessment, review sessions and reader studies"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "configuration file (key = value)");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--log", g.log_level, "log level: trace, debug, info, warn, error, off");

    std::string in, out, model, case_id, report, physician = "physician", study, png, events, host, cases_file;
    bool lenient = false, stratified = false, json = false;
    std::vector<double> fractions;
    int augment_copies = 0, port = -1;
    std::size_t n = 200;
    double malignant_fraction = 0.5, exclusion_rate = 0.0;

    auto* ingest_cmd = app.add_subcommand("ingest", "validate a case file, check anonymization, apply exclusions");
    ingest_cmd->add_option("cases", in, "case file (JSON Lines)")->required();
    ingest_cmd->add_flag("--lenient", lenient, "skip malformed lines instead of aborting");
    ingest_cmd->add_option("--out", out, "write retained cases here");
    ingest_cmd->add_option("--report", report, "write a JSON summary here");

    auto* split_cmd = app.add_subcommand("split", "random train / test1 / test2 partition");
    split_cmd->add_option("cases", in)->required();
    split_cmd->add_option("--out-dir", out, "output directory")->required();
    split_cmd->add_option("--fractions", fractions, "train test1 test2")->expected(3)->delimiter(',');
    split_cmd->add_flag("--stratified", stratified, "split each pathology class separately");

    auto* train_cmd = app.add_subcommand("train", "fit the logistic model on extracted features");
    train_cmd->add_option("cases", in)->required();
    train_cmd->add_option("--out", out, "model file")->required();
    train_cmd->add_option("--augment", augment_copies, "augmented copies per image");

    auto* assess_cmd = app.add_subcommand("assess", "score cases and print rationales");
    assess_cmd->add_option("model", model)->required();
    assess_cmd->add_option("cases", in)->required();
    assess_cmd->add_option("--case", case_id, "only this case");
    assess_cmd->add_flag("--json", json, "one JSON object per case");

    auto* heatmap_cmd = app.add_subcommand("heatmap", "occlusion heatmap for one case");
    heatmap_cmd->add_option("model", model)->required();
    heatmap_cmd->add_option("cases", in)->required();
    heatmap_cmd->add_option("--case", case_id)->required();
    heatmap_cmd->add_option("--out", out, "write the heatmap as JSON");
    heatmap_cmd->add_option("--png", png, "write an overlay image");

    auto* session_cmd = app.add_subcommand("session", "interactive review of one case");
    session_cmd->add_option("model", model)->required();
    session_cmd->add_option("cases", in)->required();
    session_cmd->add_option("--case", case_id)->required();
    session_cmd->add_option("--physician", physician);
    session_cmd->add_option("--events", events, "append session events to this log");

    auto* simulate_cmd = app.add_subcommand("simulate", "reader study on labelled cases");
    simulate_cmd->add_option("model", model)->required();
    simulate_cmd->add_option("cases", in)->required();
    simulate_cmd->add_option("--study", study, "reader profile file");
    simulate_cmd->add_option("--out", out, "write the study report here");

    auto* report_cmd = app.add_subcommand("report", "summarize a study report");
    report_cmd->add_option("report", in)->required();

    auto* serve_cmd = app.add_subcommand("serve", "run the HTTP API");
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--port", port);
    serve_cmd->add_option("--model", model);
    serve_cmd->add_option("--cases", cases_file);
    serve_cmd->add_option("--events", events, "event log");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--out-dir", out)->required();
    synth_cmd->add_option("--cases", n);
    synth_cmd->add_option("--malignant-fraction", malignant_fraction);
    synth_cmd->add_option("--exclusion-rate", exclusion_rate);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

    try {
        const auto ctx = Context::load(g);
        if (*ingest_cmd) return cmd_ingest(ctx, in, lenient, out, report);
        if (*split_cmd) return cmd_split(ctx, in, out, fractions, stratified);
        if (*train_cmd) return cmd_train(ctx, in, out, augment_copies);
        if (*assess_cmd) return cmd_assess(ctx, model, in, case_id, json);
        if (*heatmap_cmd) return cmd_heatmap(ctx, model, in, case_id, out, png);
        if (*session_cmd) return cmd_session(ctx, model, in, case_id, physician, events);
        if (*simulate_cmd) return cmd_simulate(ctx, model, in, study, out);
        if (*report_cmd) return cmd_report(in);
        if (*serve_cmd) return cmd_serve(ctx, host, port, model, cases_file, events);
        if (*synth_cmd) return cmd_synth(ctx, out, n, malignant_fraction, exclusion_rate);
    } catch (const Error& e) {
        spdlog::error("{}: {}", to_string(e.code()), e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
