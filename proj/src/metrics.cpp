#include "cxrgen/metrics.hpp"

#include "cxrgen/error.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace cxr {

void Corpus::validate() const {
    if (hypotheses.size() != references.size()) {
        throw ContractError("corpus has " + std::to_string(hypotheses.size()) + " hypotheses but " +
                            std::to_string(references.size()) + " references");
    }
    for (std::size_t i = 0; i < references.size(); ++i) {
        if (references[i].empty()) throw ContractError("reference " + std::to_string(i) + " is empty");
    }
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const TokenSequence& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

}  // namespace

std::vector<double> bleu(const Corpus& corpus, std::size_t max_n) {
    corpus.validate();
    if (corpus.size() == 0) throw ContractError("bleu: empty corpus");
    if (max_n < 1) throw ContractError("bleu: max_n must be at least 1");

    std::vector<std::size_t> matches(max_n, 0);
    std::vector<std::size_t> totals(max_n, 0);
    std::size_t hyp_length = 0;
    std::size_t ref_length = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& hyp = corpus.hypotheses[i];
        const auto& ref = corpus.references[i];
        hyp_length += hyp.size();
        ref_length += ref.size();
        for (std::size_t n = 1; n <= max_n; ++n) {
            const auto hyp_counts = count_ngrams(hyp, n);
            const auto ref_counts = count_ngrams(ref, n);
            for (const auto& [gram, count] : hyp_counts) {
                totals[n - 1] += count;
                const auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
            }
        }
    }

    std::vector<double> scores(max_n, 0.0);
    if (hyp_length == 0) return scores;
    const double brevity = hyp_length < ref_length
                               ? std::exp(1.0 - static_cast<double>(ref_length) / static_cast<double>(hyp_length))
                               : 1.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const double numerator = matches[n - 1] > 0 ? static_cast<double>(matches[n - 1]) : kBleuEpsilon;
        const double denominator = static_cast<double>(std::max<std::size_t>(totals[n - 1], 1));
        log_sum += std::log(numerator / denominator);
        scores[n - 1] = brevity * std::exp(log_sum / static_cast<double>(n));
    }
    return scores;
}

EmbeddingTable::EmbeddingTable(std::size_t dim, UnknownTokenPolicy policy) : dim_(dim), policy_(policy) {}

void EmbeddingTable::add(const std::string& token, std::vector<double> vector) {
    if (vectors_.empty() && dim_ == 0) dim_ = vector.size();
    if (vector.size() != dim_ || dim_ == 0) {
        throw ConfigError("embedding for '" + token + "' has " + std::to_string(vector.size()) +
                          " values, table dimension is " + std::to_string(dim_));
    }
    vectors_[token] = std::move(vector);
}

EmbeddingTable EmbeddingTable::parse(std::istream& in, UnknownTokenPolicy policy) {
    EmbeddingTable table(0, policy);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string token;
        if (!(fields >> token) || token.front() == '#') continue;
        std::vector<double> values;
        std::string field;
        while (fields >> field) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(field, &used));
                if (used != field.size()) throw std::invalid_argument(field);
            } catch (const std::exception&) {
                throw ConfigError("embedding table line " + std::to_string(line_no) + ": bad number '" + field + "'");
            }
        }
        if (values.empty()) throw ConfigError("embedding table line " + std::to_string(line_no) + " has no values");
        table.add(token, std::move(values));
    }
    return table;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, UnknownTokenPolicy policy) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding table " + path.string());
    return parse(in, policy);
}

EmbeddingTable EmbeddingTable::one_hot(const std::vector<std::string>& tokens) {
    const std::set<std::string> unique(tokens.begin(), tokens.end());
    EmbeddingTable table(std::max<std::size_t>(unique.size(), 1), UnknownTokenPolicy::zero);
    std::size_t index = 0;
    for (const auto& token : unique) {
        std::vector<double> v(table.dim(), 0.0);
        v[index++] = 1.0;
        table.add(token, std::move(v));
    }
    return table;
}

const std::vector<double>* EmbeddingTable::find(const std::string& token) const {
    const auto it = vectors_.find(token);
    if (it != vectors_.end()) return &it->second;
    if (policy_ == UnknownTokenPolicy::error) throw DataError("token '" + token + "' is not in the embedding table");
    return nullptr;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    // One square root of the product keeps cos(v, v) at exactly 1.
    return dot / std::sqrt(na * nb);
}

namespace {

double greedy_side(const std::vector<const std::vector<double>*>& from, const std::vector<const std::vector<double>*>& to) {
    if (from.empty()) return 0.0;
    double total = 0.0;
    for (const auto* x : from) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto* y : to) best = std::max(best, (x && y) ? cosine(*x, *y) : 0.0);
        total += std::isfinite(best) ? best : 0.0;
    }
    return total / static_cast<double>(from.size());
}

double harmonic(double p, double r) { return (p > 0.0 && r > 0.0) ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

EmbeddingScores embedding_scores(const TokenSequence& hypothesis, const TokenSequence& reference,
                                 const EmbeddingTable& table) {
    std::vector<const std::vector<double>*> hyp, ref;
    for (const auto& t : hypothesis) hyp.push_back(table.find(t));
    for (const auto& t : reference) ref.push_back(table.find(t));
    EmbeddingScores s;
    if (hyp.empty() || ref.empty()) return s;
    s.precision = greedy_side(hyp, ref);
    s.recall = greedy_side(ref, hyp);
    s.f1 = harmonic(s.precision, s.recall);
    return s;
}

EmbeddingScores embedding_f1(const Corpus& corpus, const EmbeddingTable& table) {
    corpus.validate();
    if (corpus.size() == 0) throw ContractError("embedding_f1: empty corpus");
    double p = 0.0, r = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto s = embedding_scores(corpus.hypotheses[i], corpus.references[i], table);
        p += s.precision;
        r += s.recall;
    }
    EmbeddingScores out;
    out.precision = p / static_cast<double>(corpus.size());
    out.recall = r / static_cast<double>(corpus.size());
    out.f1 = harmonic(out.precision, out.recall);
    return out;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b, double alpha) {
    if (a.size() != b.size()) throw ContractError("paired_t_test: score lists differ in length");
    if (a.size() < 2) throw ContractError("paired_t_test: need at least two pairs");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("paired_t_test: alpha must lie in (0, 1)");
    const auto n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0, scale = 0.0;
    for (auto x : d) {
        ss += (x - mean) * (x - mean);
        scale = std::max(scale, std::abs(x));
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, scale)) {
        throw DataError("paired_t_test: differences have zero variance");
    }
    TTestResult result;
    result.mean_difference = mean;
    result.dof = n - 1;
    result.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    const boost::math::students_t dist(static_cast<double>(result.dof));
    result.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.t)));
    result.p = std::min(result.p, 1.0);
    result.significant = result.p < alpha;
    return result;
}

EvaluationReport evaluate_corpus(const Corpus& corpus, const EmbeddingTable* table, std::size_t max_n) {
    EvaluationReport report;
    report.bleu = bleu(corpus, max_n);
    report.pairs = corpus.size();
    EmbeddingTable fallback;
    if (!table) {
        std::vector<std::string> tokens;
        for (const auto& s : corpus.hypotheses) tokens.insert(tokens.end(), s.begin(), s.end());
        for (const auto& s : corpus.references) tokens.insert(tokens.end(), s.begin(), s.end());
        fallback = EmbeddingTable::one_hot(tokens);
        table = &fallback;
        report.embedding_source = "one-hot (exact token match)";
    } else {
        report.embedding_source = "static table, dim " + std::to_string(table->dim());
    }
    const auto scores = embedding_f1(corpus, *table);
    report.p_embed = scores.precision;
    report.r_embed = scores.recall;
    report.f1_embed = scores.f1;
    return report;
}

nlohmann::json to_json(const EvaluationReport& report) {
    nlohmann::json j;
    for (std::size_t n = 0; n < report.bleu.size(); ++n) j["bleu_" + std::to_string(n + 1)] = report.bleu[n];
    j["p_embed"] = report.p_embed;
    j["r_embed"] = report.r_embed;
    j["f1_embed"] = report.f1_embed;
    j["pairs"] = report.pairs;
    j["embedding_source"] = report.embedding_source;
    j["embedding_note"] = "greedy matching over static token embeddings, not contextual model embeddings";
    return j;
}

TokenSequence split_tokens(const std::string& line) {
    std::istringstream in(line);
    TokenSequence out;
    std::string token;
    while (in >> token) out.push_back(token);
    return out;
}

std::vector<TokenSequence> read_token_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<TokenSequence> out;
    std::string line;
    while (std::getline(in, line)) out.push_back(split_tokens(line));
    return out;
}

}  // namespace cxr
