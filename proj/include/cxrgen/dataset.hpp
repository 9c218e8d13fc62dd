#pragma once

#include "cxrgen/demographics.hpp"
#include "cxrgen/text.hpp"
#include "cxrgen/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cxr {

/// One source record before cleaning: raw report text.
struct DataRecord {
    std::string id;
    std::vector<float> features;
    std::string text;
    DemographicRecord demographics;
};

/// One cleaned example.
struct DataPoint {
    std::string id;
    std::vector<float> features;
    CleanReport report;
    DemographicRecord demographics;
};

struct PreparedData {
    std::vector<DataPoint> points;
    std::vector<Rejected> rejected;
};

/// Cleans every record; rejected reports are listed instead of kept.
/// Throws DataError when a feature vector is not feature_dim long.
PreparedData prepare_points(const std::vector<DataRecord>& records, const CleaningRules& rules,
                            std::size_t feature_dim);

/// Balanced disjoint subsets. Points are grouped into classes of identical
/// cleaned reports; classes are visited rarest first (ties in seeded order)
/// and one unused member is taken from each class per round until
/// k_subsets * subset_size points are chosen. The chosen sequence is then
/// dealt round-robin to the subsets. Throws ConfigError if the pool is too small.
std::vector<std::vector<std::string>> sample_subsets(const std::vector<DataPoint>& pool, std::size_t k_subsets,
                                                     std::size_t subset_size, std::uint64_t seed);

struct SplitManifest {
    std::size_t subset_id = 0;
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    nlohmann::json parameters = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const SplitManifest& m);
void from_json(const nlohmann::json& j, SplitManifest& m);

/// Seeded shuffle, then contiguous train/validation/test cuts of
/// round(0.7 n), round(0.2 n) and the remainder.
SplitManifest split_ids(std::vector<std::string> ids, std::uint64_t seed, std::size_t subset_id = 0);

/// Throws IntegrityError if an id occurs in more than one list.
void check_disjoint(const SplitManifest& manifest);

/// One demographic group of the synthetic corpus.
struct SynthStratum {
    std::string name;
    Gender gender = Gender::female;
    int age_min = 19;
    int age_max = 91;
    /// Empty means drawn uniformly from SynthSpec::ethnicities.
    std::string ethnicity;
    std::size_t count = 0;
    /// Sentences of which one opens every report in this stratum.
    std::vector<std::string> sentences;
};

/// A findings pattern: a descriptor-space cluster and its sentences.
struct SynthFinding {
    std::string name;
    /// Always present.
    std::vector<std::string> sentences;
    /// One of these is appended at random.
    std::vector<std::string> variants;
};

struct SynthSpec {
    std::vector<SynthStratum> strata;
    std::vector<SynthFinding> findings;
    std::vector<std::string> ethnicities;
    std::size_t descriptor_dim = 16;
    std::size_t feature_dim = 1280;
    double cluster_separation = 3.0;
    double descriptor_noise = 1.0;
    /// Scale of a per-stratum offset added to the descriptor. At 0 the
    /// features carry no demographic information.
    double stratum_feature_coupling = 0.0;
    /// Seed of the fixed projection standing in for an image backbone.
    std::uint64_t extractor_seed = 1280;

    /// Female/male by young [19, 54] / old [56, 91], 500 records each.
    static SynthSpec defaults();
    void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& spec);
void from_json(const nlohmann::json& j, SynthSpec& spec);

/// Strata are generated in order; within a stratum every record draws its
/// finding uniformly, its descriptor from that finding's Gaussian cluster
/// and its age uniformly from the stratum range. The report is the stratum
/// sentence followed by the finding sentences, in raw clinical casing.
std::vector<DataRecord> synthesize_corpus(const SynthSpec& spec, std::uint64_t seed);

/// Maps a descriptor to a feature vector with a fixed seeded random projection.
class StubExtractor {
public:
    StubExtractor(std::size_t descriptor_dim, std::size_t feature_dim, std::uint64_t seed);
    std::vector<float> extract(const std::vector<double>& descriptor) const;

private:
    std::size_t descriptor_dim_;
    std::size_t feature_dim_;
    std::vector<double> projection_;  // [descriptor_dim x feature_dim]
};

/// Dataset directory layout:
///   records.jsonl   one object per line: id, text or tokens, gender, age,
///                   ethnicity, and features as an inline array or a blob
///                   reference {"offset": byte offset}
///   features.bin    little-endian float32 rows, row-major
///   features.json   feature_dim, row count, blob CRC-32 and id -> byte offset
void write_records(const std::filesystem::path& dir, const std::vector<DataRecord>& records);
std::vector<DataRecord> read_records(const std::filesystem::path& dir);

/// Cleaned points use the same layout with a "tokens" array in place of "text".
void write_points(const std::filesystem::path& dir, const std::vector<DataPoint>& points);
std::vector<DataPoint> read_points(const std::filesystem::path& dir);

/// Model inputs for each point: features, the demographic fields the model
/// consumes and the report encoded to max_len.
std::vector<TrainingExample> make_examples(const std::vector<DataPoint>& points, const Vocabulary& vocab,
                                           const DemographicEncoding& encoding, const DemographicFields& fields,
                                           std::size_t max_len);

/// Points whose ids are listed, in list order. Throws DataError on an unknown id.
std::vector<DataPoint> select_points(const std::vector<DataPoint>& pool, const std::vector<std::string>& ids);

}  // namespace cxr
