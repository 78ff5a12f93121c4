#pragma once

// Study report: one JSON document with metric tables, delta rows, ROC
// series and reader operating points. Keys are sorted, so identical input
// yields identical bytes.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/error.hpp"
#include "cadx/readersim.hpp"
#include "cadx/stats.hpp"

namespace cadx::service {

inline constexpr std::string_view kReportFormat = "cadx-study-report/1";

struct RocSeries {
    std::string method;
    stats::RocAnalysis roc;
};

inline nlohmann::json metrics_row(std::string_view arm, const nlohmann::json& profile, const stats::MetricsReport& m) {
    nlohmann::json j = m;
    j["arm"] = std::string(arm);
    j["profile"] = profile;
    return j;
}

inline nlohmann::json study_report_json(const readersim::StudyResult& study, const std::vector<RocSeries>& extra_roc = {}) {
    if (study.cases == 0) fail(ErrorCode::EmptyStudy, "study has no cases");

    nlohmann::json j;
    j["format"] = std::string(kReportFormat);
    j["name"] = study.name;
    j["seed"] = study.seed;
    j["cases"] = study.cases;
    j["positives"] = study.model_roc.positives;
    j["negatives"] = study.model_roc.negatives;
    j["model_version"] = study.model_version;

    auto& metrics = j["metrics"] = nlohmann::json::array();
    auto& deltas = j["deltas"] = nlohmann::json::array();
    auto& points = j["operating_points"] = nlohmann::json::array();
    auto& gaps = j["gap_analysis"] = nlohmann::json::array();
    auto& profiles = j["profiles"] = nlohmann::json::array();

    metrics.push_back(metrics_row("model", nullptr, study.model));
    points.push_back({{"arm", "model"}, {"profile", nullptr}, {"fpr", 1.0 - study.model.specificity},
                      {"tpr", study.model.sensitivity}});
    for (const auto& arm : study.arms) {
        const auto& p = arm.profile;
        nlohmann::json pj = {{"name", p.name},
                             {"seniority", std::string(readersim::to_string(p.seniority))},
                             {"sensitivity", p.sensitivity},
                             {"specificity", p.specificity},
                             {"adoption_prob", p.adoption_prob},
                             {"error_correlation", p.error_correlation},
                             {"discernment", p.discernment}};
        if (p.adoption_to_malignant) pj["adoption_to_malignant"] = *p.adoption_to_malignant;
        if (p.adoption_to_benign) pj["adoption_to_benign"] = *p.adoption_to_benign;
        if (p.target) pj["target"] = {{"sensitivity", p.target->sensitivity}, {"specificity", p.target->specificity}};
        profiles.push_back(std::move(pj));

        metrics.push_back(metrics_row("unaided", p.name, arm.unaided));
        metrics.push_back(metrics_row("aided", p.name, arm.aided));
        for (const auto& d : arm.deltas) deltas.push_back(d);
        for (const auto& g : arm.gaps) gaps.push_back(g);
        points.push_back({{"arm", "unaided"}, {"profile", p.name}, {"fpr", 1.0 - arm.unaided.specificity},
                          {"tpr", arm.unaided.sensitivity}});
        points.push_back({{"arm", "aided"}, {"profile", p.name}, {"fpr", 1.0 - arm.aided.specificity},
                          {"tpr", arm.aided.sensitivity}});
    }

    auto& roc = j["roc"] = nlohmann::json::array();
    nlohmann::json model_series = study.model_roc;
    model_series["method"] = "model";
    roc.push_back(std::move(model_series));
    for (const auto& s : extra_roc) {
        nlohmann::json r = s.roc;
        r["method"] = s.method;
        roc.push_back(std::move(r));
    }
    if (study.reference_model) {
        j["reference_model"] = {{"sensitivity", study.reference_model->sensitivity},
                                {"specificity", study.reference_model->specificity}};
    }
    return j;
}

inline std::string render_report(const nlohmann::json& report) { return report.dump(2) + "\n"; }

inline void export_study_report(const readersim::StudyResult& study, const std::filesystem::path& path,
                                const std::vector<RocSeries>& extra_roc = {}) {
    const auto text = render_report(study_report_json(study, extra_roc));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write report " + path.string());
    out << text;
    if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

/// Plain-text summary of a report: metric table, deltas and gap analysis.
inline std::string report_summary(const nlohmann::json& r) {
    char buf[256];
    std::string out = "study " + r.at("name").get<std::string>() + ": " + std::to_string(r.at("cases").get<std::size_t>()) +
                      " cases\n";
    for (const auto& s : r.at("roc")) {
        std::snprintf(buf, sizeof buf, "  ROC %-12s AUC %.3f (95%% CI %.3f-%.3f)\n", s.at("method").get<std::string>().c_str(),
                      s.at("auc").get<double>(), s.at("ci")[0].get<double>(), s.at("ci")[1].get<double>());
        out += buf;
    }
    for (const auto& m : r.at("metrics")) {
        const std::string who = m.at("profile").is_null() ? "-" : m.at("profile").get<std::string>();
        std::snprintf(buf, sizeof buf, "  %-8s %-10s sens %.3f  spec %.3f  acc %.3f\n", m.at("arm").get<std::string>().c_str(),
                      who.c_str(), m.at("sensitivity").get<double>(), m.at("specificity").get<double>(),
                      m.at("accuracy").get<double>());
        out += buf;
    }
    for (const auto& d : r.at("deltas")) out += "  " + d.at("profile").get<std::string>() + ": " + d.at("text").get<std::string>() + "\n";
    for (const auto& g : r.at("gap_analysis")) {
        std::snprintf(buf, sizeof buf, "  gap %s %s: %.3f -> %.3f (model %.3f), p_required %.3f, ",
                      g.at("profile").get<std::string>().c_str(), g.at("metric").get<std::string>().c_str(),
                      g.at("reader").get<double>(), g.at("target").get<double>(), g.at("model").get<double>(),
                      g.at("p_required").is_number() ? g.at("p_required").get<double>() : NAN);
        out += buf;
        if (g.at("attainable_independent").get<bool>()) {
            out += "reachable with independent adoption\n";
        } else if (g.at("kappa_min").is_null()) {
            out += "unreachable by any adoption policy\n";
        } else {
            std::snprintf(buf, sizeof buf, "needs adoption/model-correctness correlation >= %.3f\n", g.at("kappa_min").get<double>());
            out += buf;
        }
    }
    return out;
}

}  // namespace cadx::service
