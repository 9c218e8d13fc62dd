#include "cli.hpp"

#include "cxrgen/checkpoint.hpp"
#include "cxrgen/dataset.hpp"
#include "cxrgen/error.hpp"
#include "cxrgen/metrics.hpp"
#include "cxrgen/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>

namespace cxr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVocabFile = "vocab.txt";
constexpr const char* kCategoriesFile = "categories.json";
constexpr const char* kSplitsFile = "splits.json";
constexpr const char* kInputsFile = "inputs.json";
constexpr const char* kProvenanceFile = "provenance.json";
constexpr const char* kCheckpointDir = "best";

const std::set<std::string> kConfigSections = {"seed", "synth", "prepare", "model", "train", "generate", "demographics"};

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + " is not valid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Configuration file: a JSON object whose top-level keys are a subset of
/// kConfigSections. Command-line flags override file values.
json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    json config;
    try {
        config = read_json(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    if (!config.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, value] : config.items()) {
        if (!kConfigSections.count(key)) throw ConfigError("unknown config section: " + key);
    }
    // Typos in any section fail before a command starts work.
    if (config.contains("synth")) (void)config.at("synth").get<SynthSpec>();
    if (config.contains("model")) (void)config.at("model").get<ModelConfig>();
    if (config.contains("train")) (void)config.at("train").get<TrainConfig>();
    return config;
}

json section(const json& config, const char* key) {
    return config.contains(key) ? config.at(key) : json::object();
}

template <typename T>
void override_key(json& target, const char* key, const std::optional<T>& value) {
    if (value) target[key] = *value;
}

json checksum_entry(const fs::path& path) {
    json entry = {{"path", path.string()}};
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.is_regular_file() && e.path().filename() != kProvenanceFile) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) entry["files"][f.filename().string()] = hex32(crc32_file(f));
    } else {
        entry["crc32"] = hex32(crc32_file(path));
    }
    return entry;
}

void write_provenance(const fs::path& path, const std::string& command, const json& resolved,
                      const std::vector<fs::path>& inputs) {
    json inputs_json = json::array();
    for (const auto& p : inputs) inputs_json.push_back(checksum_entry(p));
    write_json(path, {{"tool", "cxrgen"},
                      {"command", command},
                      {"resolved_config", resolved},
                      {"inputs", inputs_json}});
}

CleaningRules cleaning_rules(const json& prepare) {
    auto rules = CleaningRules::defaults();
    if (prepare.contains("stopwords")) {
        std::ifstream in(prepare.at("stopwords").get<std::string>());
        if (!in) throw ConfigError("cannot open stop word list");
        rules.stopwords = parse_stopwords(in);
    }
    if (prepare.contains("standardization")) {
        std::ifstream in(prepare.at("standardization").get<std::string>());
        if (!in) throw ConfigError("cannot open standardization map");
        rules.standardization = StandardizationMap::parse(in);
    }
    if (prepare.contains("filters")) {
        std::ifstream in(prepare.at("filters").get<std::string>());
        if (!in) throw ConfigError("cannot open filter list");
        rules.filters = ReportFilters::parse(in);
    }
    rules.min_interior_tokens = prepare.value("min_words", rules.min_interior_tokens);
    return rules;
}

Vocabulary read_vocab(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return Vocabulary::load(in);
}

std::vector<SplitManifest> read_splits(const fs::path& dir) {
    const auto j = read_json(dir / kSplitsFile);
    auto splits = j.get<std::vector<SplitManifest>>();
    for (const auto& s : splits) check_disjoint(s);
    return splits;
}

const SplitManifest& pick_subset(const std::vector<SplitManifest>& splits, std::size_t subset) {
    if (subset >= splits.size()) {
        throw ConfigError("subset " + std::to_string(subset) + " requested but the dataset has " +
                          std::to_string(splits.size()));
    }
    return splits[subset];
}

// synth-data ----------------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> count;
    std::optional<std::size_t> feature_dim;
    std::optional<double> coupling;
};

void synth_data(const json& config, const SynthArgs& a, std::ostream& out) {
    auto spec_json = section(config, "synth");
    auto spec = spec_json.empty() ? SynthSpec::defaults() : spec_json.get<SynthSpec>();
    if (a.count) {
        for (auto& s : spec.strata) s.count = *a.count;
    }
    if (a.feature_dim) spec.feature_dim = *a.feature_dim;
    if (a.coupling) spec.stratum_feature_coupling = *a.coupling;
    const std::uint64_t seed = a.seed.value_or(config.value("seed", std::uint64_t{0}));

    const auto records = synthesize_corpus(spec, seed);
    const fs::path dir = a.out;
    write_records(dir, records);
    json spec_out = spec;
    write_json(dir / "spec.json", spec_out);
    write_provenance(dir / kProvenanceFile, "synth-data", {{"seed", seed}, {"synth", spec_out}}, {});
    out << "wrote " << records.size() << " records to " << dir.string() << "\n";
}

// prepare-data --------------------------------------------------------------

struct PrepareArgs {
    std::string input;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> subsets;
    std::optional<std::size_t> subset_size;
    std::optional<std::size_t> vocab_cap;
    std::optional<std::size_t> categories;
    std::optional<std::size_t> min_words;
    std::optional<std::size_t> feature_dim;
    std::optional<std::string> stopwords;
    std::optional<std::string> standardization;
    std::optional<std::string> filters;
};

void prepare_data(const json& config, const PrepareArgs& a, std::ostream& out) {
    auto p = section(config, "prepare");
    override_key(p, "subsets", a.subsets);
    override_key(p, "subset_size", a.subset_size);
    override_key(p, "vocab_cap", a.vocab_cap);
    override_key(p, "categories", a.categories);
    override_key(p, "min_words", a.min_words);
    override_key(p, "feature_dim", a.feature_dim);
    override_key(p, "stopwords", a.stopwords);
    override_key(p, "standardization", a.standardization);
    override_key(p, "filters", a.filters);
    static const std::set<std::string> known = {"subsets",     "subset_size", "vocab_cap", "categories",
                                                "min_words",   "feature_dim", "stopwords", "standardization",
                                                "filters"};
    for (const auto& [key, value] : p.items()) {
        if (!known.count(key)) throw ConfigError("unknown prepare key: " + key);
    }
    const std::uint64_t seed = a.seed.value_or(config.value("seed", std::uint64_t{0}));

    PrepareOptions options;
    options.vocab_cap = p.value("vocab_cap", options.vocab_cap);
    options.n_categories = p.value("categories", options.n_categories);
    options.feature_dim = p.value("feature_dim", options.feature_dim);
    const auto rules = cleaning_rules(p);

    const auto records = read_records(a.input);
    const auto corpus = prepare_corpus(records, rules, options);

    const auto k = p.value("subsets", std::size_t{1});
    const auto size = p.value("subset_size", k == 0 ? std::size_t{0} : corpus.points.size() / k);
    p["subsets"] = k;
    p["subset_size"] = size;
    p["vocab_cap"] = options.vocab_cap;
    p["categories"] = options.n_categories;
    p["min_words"] = rules.min_interior_tokens;
    p["feature_dim"] = options.feature_dim;

    Rng rng(seed);
    const auto subsets = sample_subsets(corpus.points, k, size, rng.fork_seed());
    std::vector<SplitManifest> splits;
    for (std::size_t i = 0; i < subsets.size(); ++i) {
        auto manifest = split_ids(subsets[i], rng.fork_seed(), i);
        manifest.parameters["dataset_seed"] = seed;
        splits.push_back(std::move(manifest));
    }

    const fs::path dir = a.out;
    write_points(dir, corpus.points);
    {
        std::ofstream vout(dir / kVocabFile, std::ios::trunc);
        corpus.vocab.save(vout);
    }
    write_json(dir / kCategoriesFile, corpus.categories);
    write_json(dir / kSplitsFile, splits);
    {
        std::ofstream rout(dir / "rejected.jsonl", std::ios::trunc);
        for (const auto& r : corpus.rejected) {
            rout << json{{"id", r.id}, {"reason", to_string(r.reason)}, {"detail", r.detail}}.dump() << '\n';
        }
        for (const auto& id : corpus.dropped_ethnicity) {
            rout << json{{"id", id}, {"reason", "ethnicity_not_selected"}}.dump() << '\n';
        }
    }
    write_provenance(dir / kProvenanceFile, "prepare-data", {{"seed", seed}, {"prepare", p}}, {a.input});
    out << "kept " << corpus.points.size() << " of " << records.size() << " records (" << corpus.rejected.size()
        << " rejected by cleaning, " << corpus.dropped_ethnicity.size() << " outside the ethnicity categories); "
        << "vocabulary " << corpus.vocab.size() << "; " << splits.size() << " subset(s) of " << size << "\n";
}

// train ---------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::optional<std::string> demographics;
    std::optional<std::size_t> subset;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<float> learning_rate;
    std::optional<std::size_t> patience;
    std::optional<std::size_t> checkpoint_every;
    std::optional<float> clip_norm;
    std::optional<std::size_t> d_model;
    std::optional<std::size_t> d_embed;
    std::optional<std::size_t> heads;
    std::optional<std::size_t> blocks;
    std::optional<std::size_t> max_len;
    std::optional<float> dropout;
};

void train(const json& config, const TrainArgs& a, std::ostream& out) {
    const fs::path data = a.data;
    const fs::path dir = a.out;
    const auto points = read_points(data);
    const auto vocab = read_vocab(data / kVocabFile);
    const auto categories = read_json(data / kCategoriesFile).get<std::vector<std::string>>();
    const auto splits = read_splits(data);
    const auto subset = a.subset.value_or(0);
    const auto& split = pick_subset(splits, subset);

    const auto fields_text = a.demographics.value_or(config.value("demographics", std::string("gender,age,ethnicity")));
    const auto fields = DemographicFields::parse(fields_text);

    auto model_json = section(config, "model");
    override_key(model_json, "d_model", a.d_model);
    override_key(model_json, "d_embed", a.d_embed);
    override_key(model_json, "n_heads", a.heads);
    override_key(model_json, "n_decoder_blocks", a.blocks);
    override_key(model_json, "max_len", a.max_len);
    override_key(model_json, "dropout_rate", a.dropout);
    if (a.d_model && !a.d_embed && !model_json.contains("d_embed")) model_json["d_embed"] = *a.d_model;
    if (!points.empty() && !model_json.contains("feature_dim")) model_json["feature_dim"] = points.front().features.size();
    model_json.erase("vocab_size");
    model_json.erase("demographic_dim");
    model_json.erase("demographic_fields");
    auto model_config = configure_variant(model_json.get<ModelConfig>(), vocab.size(), fields, categories.size());

    auto train_json = section(config, "train");
    override_key(train_json, "epochs", a.epochs);
    override_key(train_json, "batch_size", a.batch_size);
    override_key(train_json, "learning_rate", a.learning_rate);
    override_key(train_json, "patience", a.patience);
    override_key(train_json, "checkpoint_every", a.checkpoint_every);
    override_key(train_json, "clip_norm", a.clip_norm);
    if (a.seed) train_json["seed"] = *a.seed;
    else if (config.contains("seed") && !train_json.contains("seed")) train_json["seed"] = config.at("seed");
    const auto train_config = train_json.get<TrainConfig>();
    train_config.validate();

    const InputSpec inputs{vocab, DemographicEncoding{categories}, fields};
    const auto train_examples = make_examples(select_points(points, split.train), inputs, model_config.max_len);
    const auto val_examples = make_examples(select_points(points, split.validation), inputs, model_config.max_len);

    fs::create_directories(dir);
    std::ofstream log_out(dir / "train_log.jsonl", std::ios::trunc);
    FitOptions options;
    options.checkpoint_dir = dir;
    options.on_epoch = [&](const EpochRecord& r) {
        log_out << to_json(r).dump() << '\n' << std::flush;
        out << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss << "\n";
    };
    Model model(model_config, train_config.seed);
    const auto log = fit(train_examples, val_examples, model, train_config, options);
    save_checkpoint(model, dir / kCheckpointDir);
    {
        std::ofstream vout(dir / kVocabFile, std::ios::trunc);
        vocab.save(vout);
    }
    write_json(dir / kInputsFile, {{"categories", categories},
                                   {"demographics", fields.to_string()},
                                   {"subset", subset},
                                   {"age_min", inputs.encoding.age_min},
                                   {"age_max", inputs.encoding.age_max}});
    json resolved = {{"model", model_config}, {"train", train_config}, {"demographics", fields.to_string()},
                     {"subset", subset},       {"best_epoch", log.best_epoch}};
    write_provenance(dir / kProvenanceFile, "train", resolved, {data});
    out << "best epoch " << log.best_epoch << " validation loss " << log.best_val_loss << "; checkpoint in "
        << (dir / kCheckpointDir).string() << "\n";
}

// generate ------------------------------------------------------------------

struct GenerateArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string references_out;
    std::string split = "test";
    std::optional<std::size_t> subset;
    std::optional<float> temperature;
    std::optional<std::uint64_t> seed;
};

void generate(const json& config, const GenerateArgs& a, std::ostream& out) {
    const fs::path model_dir = a.model;
    const fs::path data = a.data;
    const auto model = load_checkpoint(model_dir / kCheckpointDir);
    const auto vocab = read_vocab(model_dir / kVocabFile);
    const auto meta = read_json(model_dir / kInputsFile);
    if (vocab.size() != model.config().vocab_size) throw IntegrityError("vocabulary does not match the checkpoint");

    DemographicEncoding encoding{meta.at("categories").get<std::vector<std::string>>()};
    encoding.age_min = meta.value("age_min", encoding.age_min);
    encoding.age_max = meta.value("age_max", encoding.age_max);
    const InputSpec inputs{vocab, encoding, DemographicFields::parse(meta.at("demographics").get<std::string>())};

    const auto points = read_points(data);
    std::vector<DataPoint> chosen;
    const auto subset = a.subset.value_or(meta.value("subset", std::size_t{0}));
    if (a.split == "all") {
        chosen = points;
    } else {
        const auto splits = read_splits(data);
        const auto& split = pick_subset(splits, subset);
        if (a.split == "test") chosen = select_points(points, split.test);
        else if (a.split == "validation") chosen = select_points(points, split.validation);
        else if (a.split == "train") chosen = select_points(points, split.train);
        else throw ConfigError("--split must be one of train, validation, test, all");
    }

    const auto gen = section(config, "generate");
    GenerationOptions options;
    options.temperature = a.temperature.value_or(gen.value("temperature", options.temperature));
    options.seed = a.seed.value_or(gen.value("seed", options.seed));

    const auto examples = make_examples(chosen, inputs, model.config().max_len);
    const auto reports = generate_reports(model, examples, vocab, options);
    std::string text;
    for (const auto& r : reports) text += detokenize(r) + "\n";
    write_text(a.out, text);
    if (!a.references_out.empty()) {
        std::string refs;
        for (const auto& r : reference_reports(chosen)) refs += detokenize(r) + "\n";
        write_text(a.references_out, refs);
    }
    json resolved = {{"temperature", options.temperature}, {"seed", options.seed}, {"split", a.split},
                     {"subset", subset},                   {"model", model.config()}};
    write_provenance(a.out + ".provenance.json", "generate", resolved, {model_dir / kCheckpointDir, data});
    out << "wrote " << reports.size() << " reports to " << a.out << "\n";
}

// evaluate ------------------------------------------------------------------

struct EvaluateArgs {
    std::string hyp;
    std::string ref;
    std::string embeddings;
    std::string unknown = "error";
    std::size_t max_n = 4;
    std::string out;
};

void evaluate(const EvaluateArgs& a, std::ostream& out) {
    Corpus corpus{read_token_lines(a.hyp), read_token_lines(a.ref)};
    if (corpus.hypotheses.size() != corpus.references.size()) {
        throw DataError(a.hyp + " has " + std::to_string(corpus.hypotheses.size()) + " lines but " + a.ref +
                        " has " + std::to_string(corpus.references.size()));
    }
    if (corpus.size() == 0) throw DataError("no reports to evaluate");
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus.references[i].empty()) throw DataError("reference line " + std::to_string(i + 1) + " is empty");
    }
    UnknownTokenPolicy policy;
    if (a.unknown == "error") policy = UnknownTokenPolicy::error;
    else if (a.unknown == "zero") policy = UnknownTokenPolicy::zero;
    else throw ConfigError("--unknown must be error or zero");

    std::optional<EmbeddingTable> table;
    if (!a.embeddings.empty()) table = EmbeddingTable::load(a.embeddings, policy);
    const auto report = evaluate_corpus(corpus, table ? &*table : nullptr, a.max_n);
    auto j = to_json(report);
    std::vector<fs::path> inputs = {a.hyp, a.ref};
    if (!a.embeddings.empty()) inputs.push_back(a.embeddings);
    if (a.out.empty()) {
        out << j.dump(2) << "\n";
    } else {
        write_json(a.out, j);
        write_provenance(a.out + ".provenance.json", "evaluate",
                         {{"max_n", a.max_n}, {"unknown", a.unknown}, {"embeddings", a.embeddings}}, inputs);
        out << j.dump(2) << "\n";
    }
}

// compare -------------------------------------------------------------------

struct CompareArgs {
    std::vector<std::string> a;
    std::vector<std::string> b;
    double alpha = 0.05;
    std::string out;
};

void compare(const CompareArgs& args, std::ostream& out) {
    if (args.a.size() != args.b.size()) throw ConfigError("--a and --b need the same number of reports");
    std::vector<json> a, b;
    for (const auto& p : args.a) a.push_back(read_json(p));
    for (const auto& p : args.b) b.push_back(read_json(p));
    json table = json::object();
    std::vector<std::string> metrics;
    for (const auto& [key, value] : a.front().items()) {
        if (value.is_number_float()) metrics.push_back(key);
    }
    for (const auto& metric : metrics) {
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].contains(metric) || !b[i].contains(metric)) {
                throw DataError("metric " + metric + " missing from report pair " + std::to_string(i + 1));
            }
            xs.push_back(a[i].at(metric).get<double>());
            ys.push_back(b[i].at(metric).get<double>());
        }
        json row = {{"a", xs}, {"b", ys}};
        try {
            const auto r = paired_t_test(xs, ys, args.alpha);
            row["t"] = r.t;
            row["p"] = r.p;
            row["mean_difference"] = r.mean_difference;
            row["significant"] = r.significant;
        } catch (const DataError&) {
            row["degenerate"] = true;
            row["significant"] = false;
        }
        table[metric] = row;
    }
    json result = {{"alpha", args.alpha}, {"pairs", a.size()}, {"metrics", table}};
    if (!args.out.empty()) {
        write_json(args.out, result);
        std::vector<fs::path> inputs(args.a.begin(), args.a.end());
        inputs.insert(inputs.end(), args.b.begin(), args.b.end());
        write_provenance(args.out + ".provenance.json", "compare", {{"alpha", args.alpha}}, inputs);
    }
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %12s %12s %10s %s\n", "metric", "mean(a-b)", "t", "p", "significant");
    out << line;
    for (const auto& metric : metrics) {
        const auto& row = table[metric];
        if (row.contains("degenerate")) {
            std::snprintf(line, sizeof line, "%-12s %12s %12s %10s %s\n", metric.c_str(), "-", "-", "-",
                          "degenerate");
        } else {
            std::snprintf(line, sizeof line, "%-12s %12.6f %12.4f %10.3g %s\n", metric.c_str(),
                          row["mean_difference"].get<double>(), row["t"].get<double>(), row["p"].get<double>(),
                          row["significant"].get<bool>() ? "yes" : "no");
        }
        out << line;
    }
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return kUsage;
        case ErrorKind::integrity:
        case ErrorKind::data: return kDataIntegrity;
        case ErrorKind::numeric: return kNumeric;
        default: return kFailure;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Demographics-aware chest X-ray report generation"};
    app.name("cxrgen");
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (sections: seed, synth, prepare, model, train, "
                                            "generate, demographics); flags override it")
        ->check(CLI::ExistingFile);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic corpus of records");
    synth_cmd->add_option("--out", synth_args.out, "Output dataset directory")->required();
    synth_cmd->add_option("--seed", synth_args.seed, "Corpus seed");
    synth_cmd->add_option("--count", synth_args.count, "Records per stratum");
    synth_cmd->add_option("--feature-dim", synth_args.feature_dim, "Feature vector length");
    synth_cmd->add_option("--coupling", synth_args.coupling, "Demographic signal mixed into the features");

    PrepareArgs prep_args;
    auto* prep_cmd = app.add_subcommand("prepare-data", "Clean records, build the vocabulary, sample subsets and splits");
    prep_cmd->add_option("--input", prep_args.input, "Record dataset directory")->required();
    prep_cmd->add_option("--out", prep_args.out, "Prepared dataset directory")->required();
    prep_cmd->add_option("--seed", prep_args.seed, "Sampling and split seed");
    prep_cmd->add_option("--subsets", prep_args.subsets, "Number of disjoint subsets (default 1)");
    prep_cmd->add_option("--subset-size", prep_args.subset_size, "Points per subset (default: pool / subsets)");
    prep_cmd->add_option("--vocab-cap", prep_args.vocab_cap, "Vocabulary size including reserved tokens");
    prep_cmd->add_option("--categories", prep_args.categories, "Number of ethnicity categories kept");
    prep_cmd->add_option("--min-words", prep_args.min_words, "Reports with fewer cleaned words are dropped");
    prep_cmd->add_option("--feature-dim", prep_args.feature_dim, "Expected feature vector length");
    prep_cmd->add_option("--stopwords", prep_args.stopwords, "Stop word list, one per line");
    prep_cmd->add_option("--standardization", prep_args.standardization, "Phrase map, 'phrase => canonical' lines");
    prep_cmd->add_option("--filters", prep_args.filters, "Filter list, 'reject|strip <regex>' lines");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Fit a model on one subset of a prepared dataset");
    train_cmd->add_option("--data", train_args.data, "Prepared dataset directory")->required();
    train_cmd->add_option("--out", train_args.out, "Model output directory")->required();
    train_cmd->add_option("--demographics", train_args.demographics,
                          "Comma separated subset of gender,age,ethnicity; empty or 'none' trains the image-only "
                          "baseline (default: all three)");
    train_cmd->add_option("--subset", train_args.subset, "Subset index (default 0)");
    train_cmd->add_option("--seed", train_args.seed, "Initialization, shuffling and dropout seed");
    train_cmd->add_option("--epochs", train_args.epochs, "Maximum epochs (default 50)");
    train_cmd->add_option("--batch-size", train_args.batch_size, "Batch size (default 64)");
    train_cmd->add_option("--lr", train_args.learning_rate, "Adam learning rate (default 3e-4)");
    train_cmd->add_option("--patience", train_args.patience, "Early-stop patience in epochs, 0 = off (default 10)");
    train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every, "Extra checkpoint every N epochs");
    train_cmd->add_option("--clip-norm", train_args.clip_norm, "Global gradient-norm clip, 0 = off");
    train_cmd->add_option("--d-model", train_args.d_model, "Model width (default 512)");
    train_cmd->add_option("--d-embed", train_args.d_embed, "Token embedding width (default: d-model)");
    train_cmd->add_option("--heads", train_args.heads, "Attention heads (default 8)");
    train_cmd->add_option("--blocks", train_args.blocks, "Decoder blocks (default 1)");
    train_cmd->add_option("--max-len", train_args.max_len, "Encoded report length (default 50)");
    train_cmd->add_option("--dropout", train_args.dropout, "Dropout rate (default 0.1)");

    GenerateArgs gen_args;
    auto* gen_cmd = app.add_subcommand("generate", "Write one generated report per line");
    gen_cmd->add_option("--model", gen_args.model, "Model directory written by train")->required();
    gen_cmd->add_option("--data", gen_args.data, "Prepared dataset directory")->required();
    gen_cmd->add_option("--out", gen_args.out, "Output text file")->required();
    gen_cmd->add_option("--references-out", gen_args.references_out, "Also write the reference reports here");
    gen_cmd->add_option("--split", gen_args.split, "train, validation, test or all (default test)");
    gen_cmd->add_option("--subset", gen_args.subset, "Subset index (default: the one the model was trained on)");
    gen_cmd->add_option("--temperature", gen_args.temperature, "Sampling temperature, 0 = greedy (default 0.5)");
    gen_cmd->add_option("--seed", gen_args.seed, "Sampling seed (default 0)");

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score hypotheses against references");
    eval_cmd->add_option("--hyp", eval_args.hyp, "Hypotheses, one whitespace-tokenized report per line")->required();
    eval_cmd->add_option("--ref", eval_args.ref, "References, aligned line by line")->required();
    eval_cmd->add_option("--embeddings", eval_args.embeddings,
                         "Token embedding table ('token v1 v2 ...' per line); default one-hot");
    eval_cmd->add_option("--unknown", eval_args.unknown, "Tokens missing from the table: error or zero");
    eval_cmd->add_option("--max-n", eval_args.max_n, "Highest BLEU order (default 4)");
    eval_cmd->add_option("--out", eval_args.out, "Write the report JSON here as well as to stdout");

    CompareArgs cmp_args;
    auto* cmp_cmd = app.add_subcommand("compare", "Paired t-test of two models over per-subset evaluation reports");
    cmp_cmd->add_option("--a", cmp_args.a, "Evaluation reports of model A, one per subset")->required();
    cmp_cmd->add_option("--b", cmp_args.b, "Evaluation reports of model B, same subset order")->required();
    cmp_cmd->add_option("--alpha", cmp_args.alpha, "Significance level (default 0.05)");
    cmp_cmd->add_option("--out", cmp_args.out, "Write the comparison JSON here");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const auto config = load_config(config_path);
        if (*synth_cmd) synth_data(config, synth_args, out);
        else if (*prep_cmd) prepare_data(config, prep_args, out);
        else if (*train_cmd) train(config, train_args, out);
        else if (*gen_cmd) generate(config, gen_args, out);
        else if (*eval_cmd) evaluate(eval_args, out);
        else if (*cmp_cmd) compare(cmp_args, out);
        return kOk;
    } catch (const Error& e) {
        err << "cxrgen: " << to_string(e.kind()) << " error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        err << "cxrgen: config error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "cxrgen: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace cxr::cli
