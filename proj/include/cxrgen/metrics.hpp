#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cxr {

using TokenSequence = std::vector<std::string>;

/// Parallel hypothesis/reference lists, one reference per hypothesis.
struct Corpus {
    std::vector<TokenSequence> hypotheses;
    std::vector<TokenSequence> references;

    std::size_t size() const { return hypotheses.size(); }
    /// Throws ContractError on unequal lengths or an empty reference.
    void validate() const;
};

/// Smoothing floor applied to zero clipped-match counts.
inline constexpr double kBleuEpsilon = 1e-9;

/// Corpus BLEU-1..max_n. Element n-1 is the geometric mean of the clipped
/// precisions of orders 1..n (uniform weights) times the brevity penalty
/// exp(1 - r/c), applied when the total hypothesis length c is below the
/// total reference length r. A zero match count is replaced by kBleuEpsilon.
std::vector<double> bleu(const Corpus& corpus, std::size_t max_n = 4);

enum class UnknownTokenPolicy {
    error,  // a token missing from the table throws DataError
    zero,   // a missing token maps to the zero vector (similarity 0 to everything)
};

/// Static token embeddings of one fixed dimension.
class EmbeddingTable {
public:
    explicit EmbeddingTable(std::size_t dim = 0, UnknownTokenPolicy policy = UnknownTokenPolicy::error);

    /// Text format, one token per line: the token, then dim whitespace
    /// separated floats. Blank lines and lines starting with '#' are ignored.
    /// Rows of differing length throw ConfigError.
    static EmbeddingTable parse(std::istream& in, UnknownTokenPolicy policy = UnknownTokenPolicy::error);
    static EmbeddingTable load(const std::filesystem::path& path,
                               UnknownTokenPolicy policy = UnknownTokenPolicy::error);
    /// Distinct unit basis vectors for the given tokens: cosine 1 for equal
    /// tokens and 0 otherwise.
    static EmbeddingTable one_hot(const std::vector<std::string>& tokens);

    void add(const std::string& token, std::vector<double> vector);
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }
    UnknownTokenPolicy policy() const { return policy_; }
    void set_policy(UnknownTokenPolicy policy) { policy_ = policy; }
    bool contains(const std::string& token) const { return vectors_.count(token) != 0; }
    /// Null for an unknown token under the zero policy.
    const std::vector<double>* find(const std::string& token) const;

private:
    std::size_t dim_;
    UnknownTokenPolicy policy_;
    std::map<std::string, std::vector<double>> vectors_;
};

/// Cosine similarity; 0 when either vector is zero.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct EmbeddingScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Greedy matching for one pair. Precision averages, over hypothesis tokens,
/// the best cosine to any reference token; recall swaps the roles. An empty
/// hypothesis scores zero.
EmbeddingScores embedding_scores(const TokenSequence& hypothesis, const TokenSequence& reference,
                                 const EmbeddingTable& table);

/// Corpus precision and recall are the means of the per-pair values; F1 is
/// their harmonic mean (0 when either is non-positive).
EmbeddingScores embedding_f1(const Corpus& corpus, const EmbeddingTable& table);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    double mean_difference = 0.0;
    std::size_t dof = 0;
    bool significant = false;
};

/// Paired two-sided Student's t-test on a - b. Throws ContractError on unequal
/// lengths or fewer than two pairs, and DataError when the differences have
/// zero variance to machine precision.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b, double alpha = 0.05);

struct EvaluationReport {
    std::vector<double> bleu;  // bleu[n-1] = BLEU-n
    double p_embed = 0.0;
    double r_embed = 0.0;
    double f1_embed = 0.0;
    std::size_t pairs = 0;
    std::string embedding_source;
};

/// BLEU plus greedy-matching scores. Without a table, one-hot embeddings over
/// the corpus vocabulary are used, which reduces greedy matching to exact
/// token matching.
EvaluationReport evaluate_corpus(const Corpus& corpus, const EmbeddingTable* table = nullptr, std::size_t max_n = 4);

nlohmann::json to_json(const EvaluationReport& report);

/// Whitespace tokenization of one line.
TokenSequence split_tokens(const std::string& line);

/// One sequence per line.
std::vector<TokenSequence> read_token_lines(const std::filesystem::path& path);

}  // namespace cxr
