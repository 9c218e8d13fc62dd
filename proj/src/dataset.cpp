#include "cxrgen/dataset.hpp"

#include "cxrgen/checkpoint.hpp"
#include "cxrgen/error.hpp"
#include "cxrgen/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace cxr {

PreparedData prepare_points(const std::vector<DataRecord>& records, const CleaningRules& rules,
                            std::size_t feature_dim) {
    PreparedData out;
    std::set<std::string> seen;
    for (const auto& record : records) {
        if (!seen.insert(record.id).second) throw DataError("duplicate record id " + record.id);
        if (record.features.size() != feature_dim) {
            throw DataError("record " + record.id + " has " + std::to_string(record.features.size()) +
                            " features, expected " + std::to_string(feature_dim));
        }
        auto result = clean_report(RawReport{record.id, record.text}, rules);
        if (auto* rejected = std::get_if<Rejected>(&result)) {
            out.rejected.push_back(std::move(*rejected));
            continue;
        }
        out.points.push_back(
            DataPoint{record.id, record.features, std::get<CleanReport>(std::move(result)), record.demographics});
    }
    return out;
}

std::vector<std::vector<std::string>> sample_subsets(const std::vector<DataPoint>& pool, std::size_t k_subsets,
                                                     std::size_t subset_size, std::uint64_t seed) {
    if (k_subsets == 0 || subset_size == 0) throw ConfigError("sample_subsets: need at least one non-empty subset");
    const auto wanted = k_subsets * subset_size;
    if (wanted > pool.size()) {
        throw ConfigError("sample_subsets: " + std::to_string(k_subsets) + " x " + std::to_string(subset_size) +
                          " points requested from a pool of " + std::to_string(pool.size()));
    }
    std::map<std::string, std::vector<std::size_t>> by_report;
    for (std::size_t i = 0; i < pool.size(); ++i) by_report[pool[i].report.text()].push_back(i);

    Rng rng(seed);
    std::vector<std::vector<std::size_t>> classes;
    classes.reserve(by_report.size());
    for (auto& [text, members] : by_report) {
        rng.shuffle(members);
        classes.push_back(std::move(members));
    }
    rng.shuffle(classes);
    std::stable_sort(classes.begin(), classes.end(),
                     [](const auto& a, const auto& b) { return a.size() < b.size(); });

    std::vector<std::size_t> chosen;
    chosen.reserve(wanted);
    for (std::size_t round = 0; chosen.size() < wanted; ++round) {
        for (const auto& members : classes) {
            if (round < members.size()) chosen.push_back(members[round]);
            if (chosen.size() == wanted) break;
        }
    }
    std::vector<std::vector<std::string>> subsets(k_subsets);
    for (std::size_t i = 0; i < chosen.size(); ++i) subsets[i % k_subsets].push_back(pool[chosen[i]].id);
    return subsets;
}

void to_json(nlohmann::json& j, const SplitManifest& m) {
    j = {{"subset_id", m.subset_id}, {"seed", m.seed},   {"parameters", m.parameters},
         {"train", m.train},         {"validation", m.validation}, {"test", m.test}};
}

void from_json(const nlohmann::json& j, SplitManifest& m) {
    try {
        m.subset_id = j.at("subset_id").get<std::size_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.parameters = j.value("parameters", nlohmann::json::object());
        m.train = j.at("train").get<std::vector<std::string>>();
        m.validation = j.at("validation").get<std::vector<std::string>>();
        m.test = j.at("test").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(std::string("malformed split manifest: ") + e.what());
    }
}

SplitManifest split_ids(std::vector<std::string> ids, std::uint64_t seed, std::size_t subset_id) {
    if (ids.empty()) throw ConfigError("split: empty id list");
    Rng rng(seed);
    rng.shuffle(ids);
    const auto n = ids.size();
    const auto n_train = (7 * n + 5) / 10;
    const auto n_val = std::min(n - n_train, (2 * n + 5) / 10);
    SplitManifest m;
    m.subset_id = subset_id;
    m.seed = seed;
    m.parameters = {{"ratios", {0.7, 0.2, 0.1}}, {"size", n}};
    const auto val_begin = ids.begin() + static_cast<std::ptrdiff_t>(n_train);
    const auto test_begin = val_begin + static_cast<std::ptrdiff_t>(n_val);
    m.train.assign(ids.begin(), val_begin);
    m.validation.assign(val_begin, test_begin);
    m.test.assign(test_begin, ids.end());
    return m;
}

void check_disjoint(const SplitManifest& manifest) {
    std::set<std::string> seen;
    for (const auto* list : {&manifest.train, &manifest.validation, &manifest.test}) {
        for (const auto& id : *list) {
            if (!seen.insert(id).second) throw IntegrityError("id " + id + " appears in more than one split");
        }
    }
}

SynthSpec SynthSpec::defaults() {
    SynthSpec spec;
    spec.ethnicities = {"white", "black", "hispanic", "asian", "other"};
    spec.strata = {
        {"female_young", Gender::female, 19, 54, "", 500,
         {"Breast soft tissue shadows overlie the lung bases bilaterally."}},
        {"female_old", Gender::female, 56, 91, "", 500,
         {"Mild thoracic kyphosis with diffuse osteopenia of the visualized bones."}},
        {"male_young", Gender::male, 19, 54, "", 500,
         {"Prominent muscular chest wall soft tissues and sharp costophrenic sulci."}},
        {"male_old", Gender::male, 56, 91, "", 500,
         {"Calcified tortuous thoracic aorta and degenerative spurring along the spine."}},
    };
    spec.findings = {
        {"normal",
         {"The lungs are clear without focal consolidation.", "No pleural effusion or pneumothorax is seen."},
         {"Heart size is normal.", "The cardiomediastinal silhouette is within normal limits.",
          "No acute osseous abnormality."}},
        {"cardiomegaly",
         {"The heart is moderately enlarged.", "Pulmonary vascular congestion is present."},
         {"Small bilateral pleural effusions.", "Mild interstitial edema.", "No focal consolidation."}},
        {"pneumonia",
         {"Patchy opacity in the right lower lobe concerning for pneumonia.", "No pneumothorax."},
         {"Left lung is clear.", "Heart size is normal.", "Trace right pleural effusion."}},
        {"effusion",
         {"Moderate left pleural effusion with adjacent basilar atelectasis.", "The right lung is clear."},
         {"Stable cardiac silhouette.", "No pneumothorax.", "Mild vascular prominence."}},
        {"pneumothorax",
         {"Small right apical pneumothorax is identified.", "No mediastinal shift."},
         {"Lungs otherwise clear.", "Heart size is normal.", "Chest tube is absent."}},
        {"nodule",
         {"A nodular opacity projects over the left upper lobe.", "Recommend chest CT for further evaluation."},
         {"No pleural effusion.", "Heart size is normal.", "Hilar contours are unremarkable."}},
    };
    return spec;
}

void SynthSpec::validate() const {
    if (strata.size() < 2) throw ConfigError("synthetic spec needs at least two demographic strata");
    if (findings.empty()) throw ConfigError("synthetic spec needs at least one finding");
    if (descriptor_dim == 0 || feature_dim == 0) throw ConfigError("synthetic spec dimensions must be positive");
    if (!(cluster_separation >= 0.0) || !(descriptor_noise >= 0.0) || !(stratum_feature_coupling >= 0.0)) {
        throw ConfigError("synthetic spec scales must be non-negative");
    }
    for (const auto& s : strata) {
        if (s.sentences.empty()) throw ConfigError("stratum " + s.name + " has no sentences");
        if (s.age_min > s.age_max) throw ConfigError("stratum " + s.name + " has an empty age range");
        if (s.ethnicity.empty() && ethnicities.empty()) {
            throw ConfigError("stratum " + s.name + " draws an ethnicity but none are listed");
        }
    }
    for (const auto& f : findings) {
        if (f.sentences.empty()) throw ConfigError("finding " + f.name + " has no sentences");
    }
}

void to_json(nlohmann::json& j, const SynthSpec& spec) {
    j = nlohmann::json::object();
    for (const auto& s : spec.strata) {
        j["strata"].push_back({{"name", s.name},
                               {"gender", to_string(s.gender)},
                               {"age_min", s.age_min},
                               {"age_max", s.age_max},
                               {"ethnicity", s.ethnicity},
                               {"count", s.count},
                               {"sentences", s.sentences}});
    }
    for (const auto& f : spec.findings) {
        j["findings"].push_back({{"name", f.name}, {"sentences", f.sentences}, {"variants", f.variants}});
    }
    j["ethnicities"] = spec.ethnicities;
    j["descriptor_dim"] = spec.descriptor_dim;
    j["feature_dim"] = spec.feature_dim;
    j["cluster_separation"] = spec.cluster_separation;
    j["descriptor_noise"] = spec.descriptor_noise;
    j["stratum_feature_coupling"] = spec.stratum_feature_coupling;
    j["extractor_seed"] = spec.extractor_seed;
}

void from_json(const nlohmann::json& j, SynthSpec& spec) {
    static const std::set<std::string> known = {"strata",         "findings",          "ethnicities",
                                                "descriptor_dim", "feature_dim",       "cluster_separation",
                                                "descriptor_noise", "stratum_feature_coupling", "extractor_seed"};
    if (!j.is_object()) throw ConfigError("synthetic spec must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown synthetic spec key: " + key);
    }
    auto out = SynthSpec::defaults();
    try {
        if (j.contains("strata")) {
            out.strata.clear();
            for (const auto& s : j.at("strata")) {
                SynthStratum stratum;
                stratum.name = s.at("name").get<std::string>();
                stratum.gender = parse_gender(s.at("gender").get<std::string>());
                stratum.age_min = s.value("age_min", 19);
                stratum.age_max = s.value("age_max", 91);
                stratum.ethnicity = s.value("ethnicity", std::string());
                stratum.count = s.at("count").get<std::size_t>();
                stratum.sentences = s.at("sentences").get<std::vector<std::string>>();
                out.strata.push_back(std::move(stratum));
            }
        }
        if (j.contains("findings")) {
            out.findings.clear();
            for (const auto& f : j.at("findings")) {
                out.findings.push_back({f.at("name").get<std::string>(),
                                        f.at("sentences").get<std::vector<std::string>>(),
                                        f.value("variants", std::vector<std::string>{})});
            }
        }
        if (j.contains("ethnicities")) out.ethnicities = j.at("ethnicities").get<std::vector<std::string>>();
        out.descriptor_dim = j.value("descriptor_dim", out.descriptor_dim);
        out.feature_dim = j.value("feature_dim", out.feature_dim);
        out.cluster_separation = j.value("cluster_separation", out.cluster_separation);
        out.descriptor_noise = j.value("descriptor_noise", out.descriptor_noise);
        out.stratum_feature_coupling = j.value("stratum_feature_coupling", out.stratum_feature_coupling);
        out.extractor_seed = j.value("extractor_seed", out.extractor_seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed synthetic spec: ") + e.what());
    } catch (const DataError& e) {
        throw ConfigError(std::string("malformed synthetic spec: ") + e.what());
    }
    spec = std::move(out);
}

StubExtractor::StubExtractor(std::size_t descriptor_dim, std::size_t feature_dim, std::uint64_t seed)
    : descriptor_dim_(descriptor_dim), feature_dim_(feature_dim), projection_(descriptor_dim * feature_dim) {
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(descriptor_dim));
    for (auto& w : projection_) w = rng.normal() * scale;
}

std::vector<float> StubExtractor::extract(const std::vector<double>& descriptor) const {
    if (descriptor.size() != descriptor_dim_) throw ShapeError("stub extractor: wrong descriptor length");
    std::vector<float> out(feature_dim_);
    for (std::size_t f = 0; f < feature_dim_; ++f) {
        double acc = 0.0;
        for (std::size_t d = 0; d < descriptor_dim_; ++d) acc += descriptor[d] * projection_[d * feature_dim_ + f];
        out[f] = static_cast<float>(acc);
    }
    return out;
}

namespace {

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim, double scale) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal() * scale;
    return v;
}

std::string join_sentences(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : " ") + p;
    return out;
}

}  // namespace

std::vector<DataRecord> synthesize_corpus(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const StubExtractor extractor(spec.descriptor_dim, spec.feature_dim, spec.extractor_seed);
    std::vector<std::vector<double>> centers;
    for (std::size_t c = 0; c < spec.findings.size(); ++c) {
        centers.push_back(gaussian_vector(rng, spec.descriptor_dim, spec.cluster_separation));
    }
    std::vector<std::vector<double>> offsets;
    for (std::size_t s = 0; s < spec.strata.size(); ++s) {
        offsets.push_back(gaussian_vector(rng, spec.descriptor_dim, spec.stratum_feature_coupling));
    }

    std::vector<DataRecord> out;
    std::size_t index = 0;
    for (std::size_t s = 0; s < spec.strata.size(); ++s) {
        const auto& stratum = spec.strata[s];
        for (std::size_t i = 0; i < stratum.count; ++i) {
            const auto c = static_cast<std::size_t>(rng.below(spec.findings.size()));
            const auto& finding = spec.findings[c];
            auto descriptor = gaussian_vector(rng, spec.descriptor_dim, spec.descriptor_noise);
            for (std::size_t d = 0; d < spec.descriptor_dim; ++d) descriptor[d] += centers[c][d] + offsets[s][d];

            std::vector<std::string> sentences = {
                stratum.sentences[static_cast<std::size_t>(rng.below(stratum.sentences.size()))]};
            sentences.insert(sentences.end(), finding.sentences.begin(), finding.sentences.end());
            if (!finding.variants.empty()) {
                sentences.push_back(finding.variants[static_cast<std::size_t>(rng.below(finding.variants.size()))]);
            }

            DataRecord record;
            char id[32];
            std::snprintf(id, sizeof id, "synth-%06zu", index++);
            record.id = id;
            record.features = extractor.extract(descriptor);
            record.text = join_sentences(sentences);
            record.demographics.gender = stratum.gender;
            const auto span = static_cast<std::uint64_t>(stratum.age_max - stratum.age_min + 1);
            record.demographics.age = stratum.age_min + static_cast<int>(rng.below(span));
            record.demographics.ethnicity =
                stratum.ethnicity.empty()
                    ? spec.ethnicities[static_cast<std::size_t>(rng.below(spec.ethnicities.size()))]
                    : stratum.ethnicity;
            out.push_back(std::move(record));
        }
    }
    return out;
}

namespace {

constexpr const char* kRecordsFile = "records.jsonl";
constexpr const char* kBlobFile = "features.bin";
constexpr const char* kBlobManifest = "features.json";

struct FeatureRow {
    std::string id;
    const std::vector<float>* values;
};

void write_feature_blob(const std::filesystem::path& dir, const std::vector<FeatureRow>& rows,
                        std::vector<std::size_t>& offsets) {
    std::vector<unsigned char> blob;
    nlohmann::json offset_map = nlohmann::json::object();
    const std::size_t dim = rows.empty() ? 0 : rows.front().values->size();
    for (const auto& row : rows) {
        if (row.values->size() != dim) throw DataError("record " + row.id + " has a different feature length");
        offsets.push_back(blob.size());
        offset_map[row.id] = blob.size();
        for (float v : *row.values) {
            auto bits = std::bit_cast<std::uint32_t>(v);
            for (int b = 0; b < 4; ++b, bits >>= 8) blob.push_back(static_cast<unsigned char>(bits & 0xFFu));
        }
    }
    std::ofstream out(dir / kBlobFile, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("failed writing " + (dir / kBlobFile).string());
    const nlohmann::json manifest = {{"feature_dim", dim},
                                     {"rows", rows.size()},
                                     {"blob", kBlobFile},
                                     {"blob_crc32", hex32(crc32_bytes(blob))},
                                     {"offsets", offset_map}};
    std::ofstream mout(dir / kBlobManifest, std::ios::trunc);
    mout << manifest.dump(1) << '\n';
    if (!mout) throw DataError("failed writing " + (dir / kBlobManifest).string());
}

struct FeatureBlob {
    std::size_t dim = 0;
    std::vector<unsigned char> bytes;
    std::unordered_map<std::string, std::size_t> offsets;

    std::vector<float> row(const std::string& id, std::size_t offset) const {
        const auto it = offsets.find(id);
        if (it == offsets.end() || it->second != offset) {
            throw IntegrityError("feature offset of " + id + " disagrees with the feature manifest");
        }
        if (offset % 4 != 0 || offset + dim * 4 > bytes.size()) {
            throw IntegrityError("feature offset of " + id + " lies outside the blob");
        }
        std::vector<float> out(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            const auto* p = bytes.data() + offset + 4 * i;
            std::uint32_t bits = 0;
            for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[b];
            out[i] = std::bit_cast<float>(bits);
        }
        return out;
    }
};

std::optional<FeatureBlob> read_feature_blob(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / kBlobManifest)) return std::nullopt;
    FeatureBlob blob;
    try {
        std::ifstream in(dir / kBlobManifest);
        const auto manifest = nlohmann::json::parse(in);
        blob.dim = manifest.at("feature_dim").get<std::size_t>();
        std::ifstream bin(dir / manifest.at("blob").get<std::string>(), std::ios::binary);
        if (!bin) throw IntegrityError("missing feature blob in " + dir.string());
        blob.bytes.assign(std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>());
        if (hex32(crc32_bytes(blob.bytes)) != manifest.at("blob_crc32").get<std::string>()) {
            throw IntegrityError("feature blob in " + dir.string() + " failed its checksum");
        }
        for (const auto& [id, offset] : manifest.at("offsets").items()) blob.offsets[id] = offset.get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("malformed feature manifest in " + dir.string() + ": " + e.what());
    }
    return blob;
}

nlohmann::json demographics_json(const DemographicRecord& d) {
    return {{"gender", to_string(d.gender)}, {"age", d.age}, {"ethnicity", d.ethnicity}};
}

DemographicRecord parse_demographics(const nlohmann::json& j) {
    DemographicRecord d;
    d.gender = parse_gender(j.at("gender").get<std::string>());
    d.age = j.at("age").get<int>();
    d.ethnicity = j.at("ethnicity").get<std::string>();
    return d;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& dir, Fn&& fn) {
    std::ifstream in(dir / kRecordsFile);
    if (!in) throw DataError("cannot open " + (dir / kRecordsFile).string());
    const auto blob = read_feature_blob(dir);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            std::vector<float> features;
            const auto& ref = j.at("features");
            if (ref.is_array()) {
                features = ref.get<std::vector<float>>();
            } else {
                if (!blob) throw IntegrityError("record references a feature blob but none exists");
                features = blob->row(j.at("id").get<std::string>(), ref.at("offset").get<std::size_t>());
            }
            fn(j, std::move(features));
        } catch (const nlohmann::json::exception& e) {
            throw DataError((dir / kRecordsFile).string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

}  // namespace

void write_records(const std::filesystem::path& dir, const std::vector<DataRecord>& records) {
    std::filesystem::create_directories(dir);
    std::vector<FeatureRow> rows;
    for (const auto& r : records) rows.push_back({r.id, &r.features});
    std::vector<std::size_t> offsets;
    write_feature_blob(dir, rows, offsets);
    std::ofstream out(dir / kRecordsFile, std::ios::trunc);
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto j = demographics_json(records[i].demographics);
        j["id"] = records[i].id;
        j["text"] = records[i].text;
        j["features"] = {{"offset", offsets[i]}};
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("failed writing " + (dir / kRecordsFile).string());
}

std::vector<DataRecord> read_records(const std::filesystem::path& dir) {
    std::vector<DataRecord> out;
    for_each_line(dir, [&](const nlohmann::json& j, std::vector<float> features) {
        out.push_back({j.at("id").get<std::string>(), std::move(features), j.at("text").get<std::string>(),
                       parse_demographics(j)});
    });
    return out;
}

void write_points(const std::filesystem::path& dir, const std::vector<DataPoint>& points) {
    std::filesystem::create_directories(dir);
    std::vector<FeatureRow> rows;
    for (const auto& p : points) rows.push_back({p.id, &p.features});
    std::vector<std::size_t> offsets;
    write_feature_blob(dir, rows, offsets);
    std::ofstream out(dir / kRecordsFile, std::ios::trunc);
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto j = demographics_json(points[i].demographics);
        j["id"] = points[i].id;
        j["tokens"] = points[i].report.tokens;
        j["features"] = {{"offset", offsets[i]}};
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("failed writing " + (dir / kRecordsFile).string());
}

std::vector<DataPoint> read_points(const std::filesystem::path& dir) {
    std::vector<DataPoint> out;
    for_each_line(dir, [&](const nlohmann::json& j, std::vector<float> features) {
        DataPoint p;
        p.id = j.at("id").get<std::string>();
        p.features = std::move(features);
        p.report = CleanReport{p.id, j.at("tokens").get<std::vector<std::string>>()};
        const auto& t = p.report.tokens;
        if (t.size() < 2 || t.front() != kStartToken || t.back() != kEndToken) {
            throw IntegrityError("point " + p.id + " does not hold a cleaned report");
        }
        p.demographics = parse_demographics(j);
        out.push_back(std::move(p));
    });
    return out;
}

std::vector<TrainingExample> make_examples(const std::vector<DataPoint>& points, const Vocabulary& vocab,
                                           const DemographicEncoding& encoding, const DemographicFields& fields,
                                           std::size_t max_len) {
    std::vector<TrainingExample> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        TrainingExample ex;
        ex.id = p.id;
        ex.features = p.features;
        if (!fields.empty()) {
            ex.demographics =
                select_fields(encode_demographics(p.demographics, encoding), fields, encoding.categories.size());
        }
        ex.ids = encode_tokens(p.report, vocab, max_len);
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<DataPoint> select_points(const std::vector<DataPoint>& pool, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < pool.size(); ++i) index.emplace(pool[i].id, i);
    std::vector<DataPoint> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        const auto it = index.find(id);
        if (it == index.end()) throw DataError("unknown data point id " + id);
        out.push_back(pool[it->second]);
    }
    return out;
}

}  // namespace cxr
