#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace cxr {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kStartToken = "<start>";
inline constexpr const char* kEndToken = "<end>";
inline constexpr const char* kUnknownToken = "<unk>";

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kStartId = 1;
inline constexpr std::int32_t kEndId = 2;
inline constexpr std::int32_t kUnknownId = 3;
inline constexpr std::size_t kReservedTokens = 4;

/// Findings section of one report, as ingested.
struct RawReport {
    std::string id;
    std::string text;
};

/// Cleaned report: <start>, lowercase word tokens, <end>.
struct CleanReport {
    std::string id;
    std::vector<std::string> tokens;

    /// Tokens between the markers.
    std::span<const std::string> interior() const;
    /// Interior tokens joined by single spaces.
    std::string text() const;
};

enum class RejectReason { too_short, prior_study };

const char* to_string(RejectReason reason);

struct Rejected {
    std::string id;
    RejectReason reason;
    std::string detail;
};

using CleanResult = std::variant<CleanReport, Rejected>;

/// Phrase -> canonical phrase replacements over token sequences.
class StandardizationMap {
public:
    /// Lines of the form "phrase => canonical"; '#' starts a comment.
    static StandardizationMap parse(std::istream& in);
    static StandardizationMap defaults();

    /// Adds a mapping. Both sides are normalized like report text and must
    /// consist of plain lowercase words.
    void add(const std::string& phrase, const std::string& canonical);

    /// Longest-match-first replacement, repeated until nothing changes.
    std::vector<std::string> apply(std::vector<std::string> tokens) const;

    std::size_t size() const { return map_.size(); }

private:
    void check_fixed_points() const;

    std::map<std::vector<std::string>, std::vector<std::string>> map_;
    std::size_t longest_ = 0;
};

/// Regex filters over the space-joined cleaned token stream.
class ReportFilters {
public:
    /// Lines "reject <regex>" or "strip <regex>"; '#' starts a comment.
    static ReportFilters parse(std::istream& in);
    static ReportFilters defaults();

    void add_reject(const std::string& pattern);
    void add_strip(const std::string& pattern);

    /// Source text of the first reject pattern matching, or empty.
    std::string first_reject_match(const std::string& text) const;
    std::string strip(const std::string& text) const;

private:
    std::vector<std::pair<std::string, std::regex>> reject_;
    std::vector<std::pair<std::string, std::regex>> strip_;
};

struct CleaningRules {
    std::set<std::string> stopwords;
    StandardizationMap standardization;
    ReportFilters filters;
    std::size_t min_interior_tokens = 9;

    static CleaningRules defaults();
};

/// One stop word per line; '#' starts a comment.
std::set<std::string> parse_stopwords(std::istream& in);
std::set<std::string> default_stopwords();

/// Lowercase, drop punctuation (apostrophes are deleted, every other
/// non-alphanumeric character separates words) and split on whitespace.
std::vector<std::string> normalize_words(const std::string& text);

/// Rule order:
///   1. lowercase, strip punctuation, split into words
///   2. drop words containing a digit
///   3. drop stop words
///   4. reject filters (prior-study references)
///   5. strip filters
///   6. standardization map
///   7. reject when fewer than min_interior_tokens words remain
///   8. add <start>/<end>
CleanResult clean_report(const RawReport& raw, const CleaningRules& rules);

/// Token list with fixed reserved ids: <pad>=0, <start>=1, <end>=2, <unk>=3.
class Vocabulary {
public:
    /// Reserved tokens only.
    Vocabulary();

    /// Ids are list positions; the first four entries must be the reserved tokens.
    static Vocabulary from_tokens(std::vector<std::string> tokens);
    /// One token per line, line number = id.
    static Vocabulary load(std::istream& in);
    void save(std::ostream& out) const;

    std::size_t size() const { return tokens_.size(); }
    bool contains(const std::string& token) const { return ids_.count(token) != 0; }
    /// Id of token, or <unk>.
    std::int32_t id(const std::string& token) const;
    const std::string& token(std::int32_t id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> ids_;
};

/// Interior tokens ranked by descending frequency (ties lexicographic),
/// the top cap - 4 kept after the reserved tokens.
Vocabulary build_vocabulary(std::span<const CleanReport> corpus, std::size_t cap = 2212);

/// Maps tokens to ids (unknown -> <unk>), truncates to max_len with <end>
/// forced into the last slot, pads with <pad> up to max_len.
std::vector<std::int32_t> encode_tokens(const CleanReport& report, const Vocabulary& vocab, std::size_t max_len);

/// Tokens for ids, stopping at the first <pad>.
std::vector<std::string> decode_ids(std::span<const std::int32_t> ids, const Vocabulary& vocab);

/// Report text: words joined by spaces, markers and padding dropped.
std::string detokenize(std::span<const std::string> tokens);

}  // namespace cxr
