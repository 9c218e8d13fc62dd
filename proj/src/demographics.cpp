#include "cxrgen/demographics.hpp"

#include "cxrgen/error.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace cxr {

const char* to_string(Gender gender) { return gender == Gender::male ? "male" : "female"; }

Gender parse_gender(const std::string& text) {
    std::string lower;
    for (unsigned char c : text) lower += static_cast<char>(std::tolower(c));
    if (lower == "female" || lower == "f") return Gender::female;
    if (lower == "male" || lower == "m") return Gender::male;
    throw DataError("unknown gender value '" + text + "'");
}

DemographicVector encode_demographics(const DemographicRecord& record, const DemographicEncoding& encoding) {
    if (encoding.categories.empty()) throw ConfigError("ethnicity category list is empty");
    if (encoding.age_max <= encoding.age_min) throw ConfigError("age bounds must satisfy age_min < age_max");
    std::set<std::string> seen(encoding.categories.begin(), encoding.categories.end());
    if (seen.size() != encoding.categories.size()) throw ConfigError("ethnicity categories must be distinct");

    DemographicVector out;
    out.values.assign(encoding.width(), 0.0f);
    out.values[0] = record.gender == Gender::male ? 1.0f : 0.0f;
    const int clipped = std::clamp(record.age, encoding.age_min, encoding.age_max);
    out.values[1] = static_cast<float>(static_cast<double>(clipped - encoding.age_min) /
                                       static_cast<double>(encoding.age_max - encoding.age_min));

    const auto it = std::find(encoding.categories.begin(), encoding.categories.end(), record.ethnicity);
    if (it == encoding.categories.end()) {
        if (encoding.strict) throw DataError("ethnicity '" + record.ethnicity + "' is not among the selected categories");
    } else {
        out.values[2 + static_cast<std::size_t>(it - encoding.categories.begin())] = 1.0f;
    }
    return out;
}

DemographicVector encode_demographics(const DemographicRecord& record, std::span<const std::string> categories,
                                      int age_min, int age_max) {
    DemographicEncoding encoding{{categories.begin(), categories.end()}, age_min, age_max, true};
    return encode_demographics(record, encoding);
}

CategorySelection select_top_categories(std::span<const DemographicRecord> records, std::size_t k) {
    if (records.empty()) throw ContractError("select_top_categories needs at least one record");
    if (k == 0) throw ContractError("select_top_categories needs k >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[r.ethnicity];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    CategorySelection selection;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) selection.categories.push_back(ranked[i].first);
    selection.under_k = ranked.size() < k;
    return selection;
}

DemographicFields DemographicFields::parse(const std::string& text) {
    DemographicFields fields;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
                   item.end());
        if (item.empty() || item == "none") continue;
        if (item == "gender") {
            fields.gender = true;
        } else if (item == "age") {
            fields.age = true;
        } else if (item == "ethnicity") {
            fields.ethnicity = true;
        } else {
            throw ConfigError("unknown demographic field '" + item + "' (expected gender, age, ethnicity)");
        }
    }
    return fields;
}

std::string DemographicFields::to_string() const {
    std::string out;
    const auto append = [&out](const char* name) {
        if (!out.empty()) out += ',';
        out += name;
    };
    if (gender) append("gender");
    if (age) append("age");
    if (ethnicity) append("ethnicity");
    return out;
}

std::size_t DemographicFields::width(std::size_t n_categories) const {
    return (gender ? 1 : 0) + (age ? 1 : 0) + (ethnicity ? n_categories : 0);
}

std::vector<float> select_fields(const DemographicVector& full, const DemographicFields& fields,
                                 std::size_t n_categories) {
    if (full.values.size() != 2 + n_categories) {
        throw ShapeError("demographic vector has " + std::to_string(full.values.size()) + " slots, expected " +
                         std::to_string(2 + n_categories));
    }
    std::vector<float> out;
    out.reserve(fields.width(n_categories));
    if (fields.gender) out.push_back(full.values[0]);
    if (fields.age) out.push_back(full.values[1]);
    if (fields.ethnicity) out.insert(out.end(), full.values.begin() + 2, full.values.end());
    return out;
}

}  // namespace cxr
