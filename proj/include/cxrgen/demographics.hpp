#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cxr {

enum class Gender { female = 0, male = 1 };

const char* to_string(Gender gender);
/// Accepts "female"/"f"/"male"/"m" in any case.
Gender parse_gender(const std::string& text);

struct DemographicRecord {
    Gender gender = Gender::female;
    int age = 0;
    std::string ethnicity;
};

/// Layout: [gender, age, ethnicity one-hot (one slot per category)].
struct DemographicVector {
    std::vector<float> values;
};

struct DemographicEncoding {
    std::vector<std::string> categories;
    int age_min = 19;
    int age_max = 91;
    /// Unknown ethnicity throws in strict mode, encodes as all-zero otherwise.
    bool strict = true;

    std::size_t width() const { return 2 + categories.size(); }
};

/// Gender 0/1, age clipped to [age_min, age_max] then min-max scaled, ethnicity one-hot.
DemographicVector encode_demographics(const DemographicRecord& record, const DemographicEncoding& encoding);

DemographicVector encode_demographics(const DemographicRecord& record, std::span<const std::string> categories,
                                      int age_min = 19, int age_max = 91);

struct CategorySelection {
    std::vector<std::string> categories;
    /// Fewer than k distinct categories existed.
    bool under_k = false;
};

/// The k most frequent ethnicity values, ties broken lexicographically.
CategorySelection select_top_categories(std::span<const DemographicRecord> records, std::size_t k);

/// Which parts of the encoded vector a model variant consumes.
struct DemographicFields {
    bool gender = false;
    bool age = false;
    bool ethnicity = false;

    static DemographicFields all() { return {true, true, true}; }
    static DemographicFields none() { return {}; }
    /// Comma separated subset of {gender, age, ethnicity}; empty or "none" selects nothing.
    static DemographicFields parse(const std::string& text);

    bool empty() const { return !gender && !age && !ethnicity; }
    std::string to_string() const;
    std::size_t width(std::size_t n_categories) const;
};

/// Keeps the selected slices of a full encoded vector, in layout order.
std::vector<float> select_fields(const DemographicVector& full, const DemographicFields& fields,
                                 std::size_t n_categories);

}  // namespace cxr
