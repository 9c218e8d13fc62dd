#include "cxrgen/text.hpp"

#include "cxrgen/error.hpp"
#include "default_resources.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace cxr {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool has_digit(const std::string& word) {
    return std::any_of(word.begin(), word.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string join(std::span<const std::string> words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::vector<std::string> split_spaces(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    return words;
}

std::regex compile(const std::string& pattern) {
    try {
        return std::regex(pattern, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
        throw ConfigError("invalid filter pattern '" + pattern + "': " + e.what());
    }
}

}  // namespace

const char* to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::too_short: return "too_short";
        case RejectReason::prior_study: return "prior_study";
    }
    return "unknown";
}

std::span<const std::string> CleanReport::interior() const {
    if (tokens.size() < 2) return {};
    return std::span<const std::string>(tokens).subspan(1, tokens.size() - 2);
}

std::string CleanReport::text() const { return join(interior()); }

std::vector<std::string> normalize_words(const std::string& text) {
    std::string buffer;
    buffer.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (c == '\'') continue;
        // U+2019 RIGHT SINGLE QUOTATION MARK, used as an apostrophe.
        if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
            static_cast<unsigned char>(text[i + 2]) == 0x99) {
            i += 2;
            continue;
        }
        if (c < 0x80 && std::isalnum(c)) {
            buffer += static_cast<char>(std::tolower(c));
        } else {
            buffer += ' ';
        }
    }
    return split_spaces(buffer);
}

StandardizationMap StandardizationMap::parse(std::istream& in) {
    StandardizationMap map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line.substr(0, line.find('#')));
        if (body.empty()) continue;
        const auto arrow = body.find("=>");
        if (arrow == std::string::npos) {
            throw ConfigError("standardization line " + std::to_string(line_no) + ": expected 'phrase => canonical'");
        }
        map.add(body.substr(0, arrow), body.substr(arrow + 2));
    }
    map.check_fixed_points();
    return map;
}

StandardizationMap StandardizationMap::defaults() {
    std::istringstream in(resources::kStandardization);
    return parse(in);
}

void StandardizationMap::add(const std::string& phrase, const std::string& canonical) {
    const auto key = normalize_words(phrase);
    const auto value = normalize_words(canonical);
    if (key.empty() || value.empty()) throw ConfigError("standardization entries must be non-empty: '" + phrase + "'");
    for (const auto& w : key) {
        if (has_digit(w)) throw ConfigError("standardization phrase contains a digit: '" + phrase + "'");
    }
    for (const auto& w : value) {
        if (has_digit(w)) throw ConfigError("standardization canonical form contains a digit: '" + canonical + "'");
    }
    if (key == value) return;
    map_[key] = value;
    longest_ = std::max(longest_, key.size());
    check_fixed_points();
}

void StandardizationMap::check_fixed_points() const {
    for (const auto& [key, value] : map_) {
        if (apply(value) != value) {
            throw ConfigError("standardization canonical form '" + join(value) + "' is itself rewritten");
        }
    }
}

std::vector<std::string> StandardizationMap::apply(std::vector<std::string> tokens) const {
    if (map_.empty()) return tokens;
    // A rewrite can expose a new match across its boundary; iterate to a
    // fixed point, bounded so that a badly formed map cannot loop forever.
    constexpr int kMaxPasses = 32;
    for (int pass = 0; pass < kMaxPasses; ++pass) {
        std::vector<std::string> out;
        out.reserve(tokens.size());
        bool changed = false;
        std::size_t i = 0;
        while (i < tokens.size()) {
            bool matched = false;
            const std::size_t max_len = std::min(longest_, tokens.size() - i);
            for (std::size_t len = max_len; len >= 1; --len) {
                std::vector<std::string> key(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                             tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
                auto it = map_.find(key);
                if (it != map_.end()) {
                    out.insert(out.end(), it->second.begin(), it->second.end());
                    i += len;
                    matched = changed = true;
                    break;
                }
            }
            if (!matched) out.push_back(tokens[i++]);
        }
        if (!changed) return out;
        tokens = std::move(out);
    }
    throw ConfigError("standardization map does not converge on '" + join(tokens) + "'");
}

ReportFilters ReportFilters::parse(std::istream& in) {
    ReportFilters filters;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty() || body[0] == '#') continue;
        const auto space = body.find_first_of(" \t");
        const auto action = body.substr(0, space);
        const auto pattern = space == std::string::npos ? std::string() : trim(body.substr(space));
        if (pattern.empty()) throw ConfigError("filter line " + std::to_string(line_no) + ": missing pattern");
        if (action == "reject") {
            filters.add_reject(pattern);
        } else if (action == "strip") {
            filters.add_strip(pattern);
        } else {
            throw ConfigError("filter line " + std::to_string(line_no) + ": unknown action '" + action + "'");
        }
    }
    return filters;
}

ReportFilters ReportFilters::defaults() {
    std::istringstream in(resources::kFilters);
    return parse(in);
}

void ReportFilters::add_reject(const std::string& pattern) { reject_.emplace_back(pattern, compile(pattern)); }

void ReportFilters::add_strip(const std::string& pattern) { strip_.emplace_back(pattern, compile(pattern)); }

std::string ReportFilters::first_reject_match(const std::string& text) const {
    for (const auto& [source, re] : reject_) {
        if (std::regex_search(text, re)) return source;
    }
    return {};
}

std::string ReportFilters::strip(const std::string& text) const {
    std::string out = text;
    for (const auto& [source, re] : strip_) out = std::regex_replace(out, re, " ");
    return out;
}

std::set<std::string> parse_stopwords(std::istream& in) {
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        const auto body = trim(line.substr(0, line.find('#')));
        if (body.empty()) continue;
        for (auto& w : normalize_words(body)) words.insert(std::move(w));
    }
    return words;
}

std::set<std::string> default_stopwords() {
    std::istringstream in(resources::kStopwords);
    return parse_stopwords(in);
}

CleaningRules CleaningRules::defaults() {
    return CleaningRules{default_stopwords(), StandardizationMap::defaults(), ReportFilters::defaults(), 9};
}

CleanResult clean_report(const RawReport& raw, const CleaningRules& rules) {
    std::vector<std::string> words;
    for (auto& w : normalize_words(raw.text)) {
        if (has_digit(w) || rules.stopwords.count(w)) continue;
        words.push_back(std::move(w));
    }

    const auto joined = join(words);
    if (auto pattern = rules.filters.first_reject_match(joined); !pattern.empty()) {
        return Rejected{raw.id, RejectReason::prior_study, "matched filter " + pattern};
    }
    words = rules.standardization.apply(split_spaces(rules.filters.strip(joined)));

    if (words.size() < rules.min_interior_tokens) {
        return Rejected{raw.id, RejectReason::too_short,
                        std::to_string(words.size()) + " words after cleaning, need " +
                            std::to_string(rules.min_interior_tokens)};
    }
    CleanReport report{raw.id, {}};
    report.tokens.reserve(words.size() + 2);
    report.tokens.emplace_back(kStartToken);
    for (auto& w : words) report.tokens.push_back(std::move(w));
    report.tokens.emplace_back(kEndToken);
    return report;
}

Vocabulary::Vocabulary() {
    for (const char* t : {kPadToken, kStartToken, kEndToken, kUnknownToken}) {
        ids_.emplace(t, static_cast<std::int32_t>(tokens_.size()));
        tokens_.emplace_back(t);
    }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    const std::vector<std::string> reserved = {kPadToken, kStartToken, kEndToken, kUnknownToken};
    if (tokens.size() < kReservedTokens || !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
        throw IntegrityError("vocabulary must start with <pad>, <start>, <end>, <unk>");
    }
    Vocabulary vocab;
    vocab.tokens_.clear();
    vocab.ids_.clear();
    for (auto& t : tokens) {
        if (t.empty()) throw IntegrityError("vocabulary contains an empty token");
        if (!vocab.ids_.emplace(t, static_cast<std::int32_t>(vocab.tokens_.size())).second) {
            throw IntegrityError("vocabulary token listed twice: " + t);
        }
        vocab.tokens_.push_back(std::move(t));
    }
    return vocab;
}

Vocabulary Vocabulary::load(std::istream& in) {
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
}

void Vocabulary::save(std::ostream& out) const {
    for (const auto& t : tokens_) out << t << '\n';
}

std::int32_t Vocabulary::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnknownId : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

Vocabulary build_vocabulary(std::span<const CleanReport> corpus, std::size_t cap) {
    if (cap < kReservedTokens + 1) {
        throw ConfigError("vocabulary cap must be at least 5, got " + std::to_string(cap));
    }
    if (corpus.empty()) throw ContractError("build_vocabulary needs a non-empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& report : corpus)
        for (const auto& t : report.interior()) ++counts[t];

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> tokens = {kPadToken, kStartToken, kEndToken, kUnknownToken};
    for (const auto& [token, count] : ranked) {
        if (tokens.size() >= cap) break;
        if (token == kPadToken || token == kStartToken || token == kEndToken || token == kUnknownToken) continue;
        tokens.push_back(token);
    }
    return Vocabulary::from_tokens(std::move(tokens));
}

std::vector<std::int32_t> encode_tokens(const CleanReport& report, const Vocabulary& vocab, std::size_t max_len) {
    if (max_len < 3) throw ContractError("encode_tokens: max_len must be at least 3");
    std::vector<std::int32_t> ids;
    ids.reserve(max_len);
    for (const auto& t : report.tokens) {
        if (ids.size() == max_len) break;
        ids.push_back(vocab.id(t));
    }
    if (report.tokens.size() > max_len) ids.back() = kEndId;
    ids.resize(max_len, kPadId);
    return ids;
}

std::vector<std::string> decode_ids(std::span<const std::int32_t> ids, const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    for (auto id : ids) {
        if (id == kPadId) break;
        tokens.push_back(vocab.token(id));
    }
    return tokens;
}

std::string detokenize(std::span<const std::string> tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (t == kStartToken || t == kPadToken) continue;
        if (t == kEndToken) break;
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

}  // namespace cxr
