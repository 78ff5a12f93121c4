#pragma once

// Case files are JSON Lines, one case per line. See docs/case_format.md.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/error.hpp"
#include "cadx/features.hpp"
#include "cadx/imaging/extract.hpp"
#include "cadx/imaging/image.hpp"

namespace cadx::ingest {

enum class Sex { F, M, unknown };

constexpr std::string_view to_string(Sex s) {
    switch (s) {
        case Sex::F: return "F";
        case Sex::M: return "M";
        case Sex::unknown: return "unknown";
    }
    return "unknown";
}

inline std::optional<Sex> parse_sex(std::string_view s) {
    if (s == "F" || s == "f") return Sex::F;
    if (s == "M" || s == "m") return Sex::M;
    if (s == "unknown" || s.empty()) return Sex::unknown;
    return std::nullopt;
}

struct CaseRecord {
    std::string case_id;
    int age = 0;
    Sex sex = Sex::unknown;
    /// Relative to the case file's directory.
    std::optional<std::string> image_ref;
    std::optional<imaging::Image> image;
    std::optional<std::string> mask_ref;
    std::optional<imaging::Mask> mask;
    std::optional<imaging::BBox> bbox;
    std::optional<FeatureVector> features;
    std::optional<Label> pathology;
    std::string machine_tag;
    std::vector<std::string> prior_treatment;
    bool clinical_complete = true;
    std::optional<double> mm_per_pixel;
    /// Fields outside the documented format, kept verbatim.
    nlohmann::json metadata = nlohmann::json::object();

    [[nodiscard]] bool has_image() const { return image.has_value() || image_ref.has_value(); }
    bool operator==(const CaseRecord&) const = default;
};

struct ParseIssue {
    std::size_t line = 0;
    std::string message;
};

struct CaseSet {
    std::string name;
    std::vector<CaseRecord> cases;
    /// Directory that image_ref / mask_ref are resolved against.
    std::filesystem::path base_dir;
    /// Lenient loads only: lines that were skipped.
    std::vector<ParseIssue> issues;

    [[nodiscard]] std::size_t size() const { return cases.size(); }
    [[nodiscard]] const CaseRecord* find(std::string_view id) const {
        for (const auto& c : cases) {
            if (c.case_id == id) return &c;
        }
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Record (de)serialization

namespace detail {

inline const std::set<std::string, std::less<>>& known_keys() {
    static const std::set<std::string, std::less<>> keys = {
        "case_id",  "age",         "sex",       "image_ref",       "image",    "mask_ref",          "mask",
        "bbox",     "features",    "pathology", "machine_tag",     "prior_treatment", "clinical_complete",
        "mm_per_pixel"};
    return keys;
}

template <typename R>
R raster_from_json(const nlohmann::json& j, bool binary) {
    const int w = j.at("width").get<int>();
    const int h = j.at("height").get<int>();
    R r(w, h);
    const auto& px = j.at("pixels");
    if (!px.is_array() || px.size() != r.size()) {
        fail(ErrorCode::DimensionMismatch, "inline raster has " + std::to_string(px.size()) + " pixels, expected " +
                                               std::to_string(r.size()));
    }
    for (std::size_t i = 0; i < r.size(); ++i) {
        const int v = px[i].get<int>();
        if (v < 0 || v > 255) fail(ErrorCode::CorruptData, "pixel value out of range");
        r.pixels[i] = static_cast<std::uint8_t>(binary ? (v != 0) : v);
    }
    return r;
}

template <typename R>
nlohmann::json raster_to_json(const R& r) {
    return {{"width", r.width}, {"height", r.height}, {"pixels", r.pixels}};
}

}  // namespace detail

/// Parses one record; throws MalformedRecord with `line` on any problem.
inline CaseRecord parse_case(const nlohmann::json& j, std::size_t line = 0) {
    auto bad = [&](const std::string& what) -> void {
        fail(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": " + what, line);
    };
    if (!j.is_object()) bad("record must be an object");
    CaseRecord c;
    try {
        if (!j.contains("case_id") || !j["case_id"].is_string() || j["case_id"].get<std::string>().empty()) {
            bad("missing case_id");
        }
        c.case_id = j["case_id"].get<std::string>();
        if (j.contains("age")) {
            if (!j["age"].is_number_integer() || j["age"].get<long long>() < 0) bad("age must be a non-negative integer");
            c.age = j["age"].get<int>();
        }
        if (j.contains("sex")) {
            auto s = parse_sex(j["sex"].get<std::string>());
            if (!s) bad("sex must be F, M or unknown");
            c.sex = *s;
        }
        if (j.contains("image_ref") && !j["image_ref"].is_null()) c.image_ref = j["image_ref"].get<std::string>();
        if (j.contains("image") && !j["image"].is_null()) c.image = detail::raster_from_json<imaging::Image>(j["image"], false);
        if (j.contains("mask_ref") && !j["mask_ref"].is_null()) c.mask_ref = j["mask_ref"].get<std::string>();
        if (j.contains("mask") && !j["mask"].is_null()) c.mask = detail::raster_from_json<imaging::Mask>(j["mask"], true);
        if (j.contains("bbox") && !j["bbox"].is_null()) {
            const auto b = j["bbox"].get<std::vector<int>>();
            if (b.size() != 4 || b[2] < 1 || b[3] < 1) bad("bbox must be [x, y, w, h] with positive size");
            c.bbox = imaging::BBox{b[0], b[1], b[2], b[3]};
        }
        if (j.contains("features") && !j["features"].is_null()) c.features = j["features"].get<FeatureVector>();
        if (j.contains("pathology") && !j["pathology"].is_null()) {
            auto l = parse_label(j["pathology"].get<std::string>());
            if (!l) bad("pathology must be benign or malignant");
            c.pathology = *l;
        }
        c.machine_tag = j.value("machine_tag", std::string{});
        if (j.contains("prior_treatment") && !j["prior_treatment"].is_null()) {
            c.prior_treatment = j["prior_treatment"].get<std::vector<std::string>>();
        }
        c.clinical_complete = j.value("clinical_complete", true);
        if (j.contains("mm_per_pixel") && !j["mm_per_pixel"].is_null()) {
            c.mm_per_pixel = j["mm_per_pixel"].get<double>();
            if (!(*c.mm_per_pixel > 0)) bad("mm_per_pixel must be positive");
        }
        for (const auto& [k, v] : j.items()) {
            if (!detail::known_keys().contains(k)) c.metadata[k] = v;
        }
    } catch (const nlohmann::json::exception& e) {
        bad(e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::MalformedRecord) throw;
        bad(e.what());
    }

    if (c.image && c.mask && !c.mask->same_shape(*c.image)) bad("mask dimensions differ from image");
    if (c.image && c.bbox && !c.bbox->inside(c.image->width, c.image->height)) bad("bbox outside image bounds");
    return c;
}

inline void to_json(nlohmann::json& j, const CaseRecord& c) {
    j = nlohmann::json::object();
    for (const auto& [k, v] : c.metadata.items()) j[k] = v;
    j["case_id"] = c.case_id;
    j["age"] = c.age;
    j["sex"] = std::string(to_string(c.sex));
    if (c.image_ref) j["image_ref"] = *c.image_ref;
    if (c.image) j["image"] = detail::raster_to_json(*c.image);
    if (c.mask_ref) j["mask_ref"] = *c.mask_ref;
    if (c.mask) j["mask"] = detail::raster_to_json(*c.mask);
    if (c.bbox) j["bbox"] = {c.bbox->x, c.bbox->y, c.bbox->w, c.bbox->h};
    if (c.features) j["features"] = *c.features;
    if (c.pathology) j["pathology"] = *c.pathology;
    j["machine_tag"] = c.machine_tag;
    j["prior_treatment"] = c.prior_treatment;
    j["clinical_complete"] = c.clinical_complete;
    if (c.mm_per_pixel) j["mm_per_pixel"] = *c.mm_per_pixel;
}

inline void from_json(const nlohmann::json& j, CaseRecord& c) { c = parse_case(j); }

/// Parses JSON Lines text. Blank lines are skipped.
inline CaseSet parse_cases(std::string_view text, bool strict, std::string name = "cases") {
    CaseSet cs;
    cs.name = std::move(name);
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = cadx::detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        CaseRecord c;
        try {
            auto j = nlohmann::json::parse(line, nullptr, true);
            c = parse_case(j, line_no);
        } catch (const nlohmann::json::exception& e) {
            if (strict) fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.what(), line_no);
            cs.issues.push_back({line_no, e.what()});
            continue;
        } catch (const Error& e) {
            if (strict) throw;
            cs.issues.push_back({line_no, e.what()});
            continue;
        }
        if (!seen.insert(c.case_id).second) {
            fail(ErrorCode::DuplicateCaseId, "duplicate case_id '" + c.case_id + "'", line_no, c.case_id);
        }
        cs.cases.push_back(std::move(c));
    }
    return cs;
}

inline CaseSet load_cases(const std::filesystem::path& path, bool strict = true) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::FileNotFound, "cannot open case file " + path.string(), 0, path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto cs = parse_cases(text, strict, path.stem().string());
    cs.base_dir = path.parent_path();
    return cs;
}

inline void save_cases(const CaseSet& cs, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    for (const auto& c : cs.cases) out << nlohmann::json(c).dump() << '\n';
    if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Pixel access

/// The case image, inline or loaded from image_ref. nullopt when there is none.
inline std::optional<imaging::Image> case_image(const CaseRecord& c, const std::filesystem::path& base_dir) {
    if (c.image) return c.image;
    if (!c.image_ref) return std::nullopt;
    return imaging::load_image(base_dir / *c.image_ref);
}

/// The segmentation: inline mask, mask_ref (nonzero pixels), or the filled bbox.
inline std::optional<imaging::Mask> case_mask(const CaseRecord& c, const std::filesystem::path& base_dir, int width,
                                              int height) {
    std::optional<imaging::Mask> m;
    if (c.mask) {
        m = c.mask;
    } else if (c.mask_ref) {
        m = imaging::mask_from_image(imaging::load_image(base_dir / *c.mask_ref));
    } else if (c.bbox) {
        if (!c.bbox->inside(width, height)) fail(ErrorCode::DimensionMismatch, c.case_id + ": bbox outside image bounds");
        m = imaging::Mask(width, height);
        for (int y = c.bbox->y; y < c.bbox->y + c.bbox->h; ++y) {
            for (int x = c.bbox->x; x < c.bbox->x + c.bbox->w; ++x) m->at(x, y) = 1;
        }
    }
    if (m && (m->width != width || m->height != height)) {
        fail(ErrorCode::DimensionMismatch, c.case_id + ": mask dimensions differ from image");
    }
    return m;
}

/// Stored features, or features extracted from image and mask.
inline FeatureVector case_features(const CaseRecord& c, const std::filesystem::path& base_dir,
                                   const imaging::FeatureConfig& cfg = {}) {
    if (c.features) return *c.features;
    try {
        auto img = case_image(c, base_dir);
        if (!img) fail(ErrorCode::FeatureExtractionFailed, c.case_id + ": no image to extract features from");
        auto mask = case_mask(c, base_dir, img->width, img->height);
        if (!mask) fail(ErrorCode::FeatureExtractionFailed, c.case_id + ": no mask or bbox");
        return imaging::extract_features(*img, *mask, c.mm_per_pixel, cfg);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::FeatureExtractionFailed) throw;
        fail(ErrorCode::FeatureExtractionFailed, c.case_id + ": " + e.what(), 0, c.case_id);
    }
}

// ---------------------------------------------------------------------------
// Exclusion

enum class ExclusionReason { MissingImage, PriorTreatment, IncompleteClinicalInfo, MissingPathology };

constexpr std::string_view to_string(ExclusionReason r) {
    switch (r) {
        case ExclusionReason::MissingImage: return "MissingImage";
        case ExclusionReason::PriorTreatment: return "PriorTreatment";
        case ExclusionReason::IncompleteClinicalInfo: return "IncompleteClinicalInfo";
        case ExclusionReason::MissingPathology: return "MissingPathology";
    }
    return "MissingImage";
}

struct Excluded {
    std::string case_id;
    ExclusionReason reason;
    bool operator==(const Excluded&) const = default;
};

struct ExclusionReport {
    CaseSet retained;
    std::vector<Excluded> excluded;
};

/// First matching criterion in fixed order, or nullopt. A referenced image
/// file that does not exist counts as missing.
inline std::optional<ExclusionReason> exclusion_reason(const CaseRecord& c, const std::filesystem::path& base_dir) {
    if (!c.image) {
        if (!c.image_ref || c.image_ref->empty()) return ExclusionReason::MissingImage;
        std::error_code ec;
        if (!std::filesystem::exists(base_dir / *c.image_ref, ec)) return ExclusionReason::MissingImage;
    }
    if (std::any_of(c.prior_treatment.begin(), c.prior_treatment.end(), [](const auto& t) { return !t.empty(); })) {
        return ExclusionReason::PriorTreatment;
    }
    if (!c.clinical_complete) return ExclusionReason::IncompleteClinicalInfo;
    if (!c.pathology) return ExclusionReason::MissingPathology;
    return std::nullopt;
}

inline ExclusionReport apply_exclusions(const CaseSet& cs) {
    ExclusionReport r;
    r.retained.name = cs.name;
    r.retained.base_dir = cs.base_dir;
    for (const auto& c : cs.cases) {
        if (auto why = exclusion_reason(c, cs.base_dir)) {
            r.excluded.push_back({c.case_id, *why});
        } else {
            r.retained.cases.push_back(c);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Split

struct SplitFractions {
    double train = 0.8;
    double test1 = 0.1;
    double test2 = 0.1;
};

struct Split {
    CaseSet train, test1, test2;
    std::string generator;
    std::uint64_t seed = 0;
    bool stratified = false;
    SplitFractions fractions;
};

inline constexpr std::string_view kSplitGenerator = "mt19937_64+std::shuffle";

namespace detail {

inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& f) {
    const auto t1 = static_cast<std::size_t>(std::llround(f.test1 * static_cast<double>(n)));
    const auto t2 = static_cast<std::size_t>(std::llround(f.test2 * static_cast<double>(n)));
    return {n - t1 - t2, t1, t2};
}

}  // namespace detail

/// Random partition into train / test1 / test2. Test sizes are the rounded
/// fractions and the remainder goes to train. Each part keeps input order.
/// In stratified mode each pathology class (and unlabelled cases) is split
/// separately with the same rule.
inline Split split_dataset(const CaseSet& cs, const SplitFractions& f, std::uint64_t seed, bool stratified = false) {
    for (double x : {f.train, f.test1, f.test2}) {
        if (!(x > 0.0) || !std::isfinite(x)) fail(ErrorCode::BadFractions, "split fractions must be positive");
    }
    if (std::abs(f.train + f.test1 + f.test2 - 1.0) > 1e-9) fail(ErrorCode::BadFractions, "split fractions must sum to 1");

    std::vector<std::vector<std::size_t>> strata;
    if (stratified) {
        strata.resize(3);
        for (std::size_t i = 0; i < cs.cases.size(); ++i) {
            const auto& p = cs.cases[i].pathology;
            strata[p ? static_cast<std::size_t>(*p) : 2].push_back(i);
        }
    } else {
        strata.emplace_back(cs.cases.size());
        for (std::size_t i = 0; i < cs.cases.size(); ++i) strata[0][i] = i;
    }

    std::mt19937_64 rng(seed);
    std::vector<int> part(cs.cases.size(), 0);
    for (auto& idx : strata) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto sizes = detail::split_sizes(idx.size(), f);
        for (std::size_t k = 0; k < idx.size(); ++k) part[idx[k]] = k < sizes[1] ? 1 : (k < sizes[1] + sizes[2] ? 2 : 0);
    }

    Split s;
    s.generator = std::string(kSplitGenerator);
    s.seed = seed;
    s.stratified = stratified;
    s.fractions = f;
    CaseSet* parts[3] = {&s.train, &s.test1, &s.test2};
    const char* names[3] = {"train", "test1", "test2"};
    for (int k = 0; k < 3; ++k) {
        parts[k]->name = cs.name + "." + names[k];
        parts[k]->base_dir = cs.base_dir;
    }
    for (std::size_t i = 0; i < cs.cases.size(); ++i) parts[part[i]]->cases.push_back(cs.cases[i]);
    return s;
}

inline nlohmann::json split_report(const Split& s) {
    auto ids = [](const CaseSet& c) {
        std::vector<std::string> out;
        for (const auto& r : c.cases) out.push_back(r.case_id);
        return out;
    };
    return {{"generator", s.generator},
            {"seed", s.seed},
            {"stratified", s.stratified},
            {"fractions", {{"train", s.fractions.train}, {"test1", s.fractions.test1}, {"test2", s.fractions.test2}}},
            {"sizes", {{"train", s.train.size()}, {"test1", s.test1.size()}, {"test2", s.test2.size()}}},
            {"ids", {{"train", ids(s.train)}, {"test1", ids(s.test1)}, {"test2", ids(s.test2)}}}};
}

// ---------------------------------------------------------------------------
// Anonymization

inline constexpr std::string_view kIdentifierFields[] = {
    "name", "patient_name", "hospital_id", "mrn", "medical_record_number", "birth_date", "date_of_birth", "dob",
};

/// Metadata fields that identify the patient and are populated. Pixels are
/// not inspected.
inline std::vector<std::string> verify_anonymization(const CaseRecord& c) {
    std::vector<std::string> out;
    for (const auto& [k, v] : c.metadata.items()) {
        std::string key = k;
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
        std::replace(key.begin(), key.end(), '-', '_');
        const bool identifying = std::find(std::begin(kIdentifierFields), std::end(kIdentifierFields), key) !=
                                 std::end(kIdentifierFields);
        const bool populated = !(v.is_null() || (v.is_string() && v.get<std::string>().empty()));
        if (identifying && populated) out.push_back(k);
    }
    return out;
}

}  // namespace cadx::ingest
