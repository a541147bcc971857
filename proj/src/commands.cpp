#include "semsmooth/commands.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "semsmooth/errors.hpp"
#include "semsmooth/rng.hpp"

namespace semsmooth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* format, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), format, value);
  return buffer;
}

std::string fmt_full(double value) { return fmt("%.17g", value); }
std::string fmt_metric(double value) { return fmt("%.4f", value); }
std::string fmt_setting(double value) { return fmt("%.6g", value); }

std::string checksum_hex(const std::string& text) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buffer;
}

std::string setting_or_na(const std::optional<double>& value) {
  return value.has_value() ? fmt_setting(*value) : "NA";
}

std::string wordnet_or_na(const std::optional<bool>& value) {
  return value.has_value() ? (*value ? "1" : "0") : "NA";
}

void write_text_file(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) {
    fs::create_directories(p.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write file: " + path);
  }
  out << content;
  if (!out) {
    throw FormatError("short write: " + path);
  }
}

json runspec_to_json(const RunSpec& spec) {
  json j;
  j["loss"] = loss_name(spec.loss);
  j["s"] = spec.s.has_value() ? json(*spec.s) : json(nullptr);
  j["t"] = spec.t.has_value() ? json(*spec.t) : json(nullptr);
  j["w"] = spec.use_synonym_mask.has_value() ? json(*spec.use_synonym_mask) : json(nullptr);
  j["seed"] = spec.seed;
  j["preset"] = spec.preset;
  j["corpus"] = spec.corpus_path;
  j["embeddings"] = spec.embeddings_path;
  j["lexicon"] = spec.lexicon_path;
  j["out"] = spec.out_dir;
  j["min_count"] = spec.min_count;
  j["max_decode_len"] = spec.max_decode_len;
  return j;
}

json metrics_to_json(const MetricReport& metrics) {
  return {{"sacreBLEU", metrics.bleu},
          {"ROUGE-1", metrics.rouge1},
          {"ROUGE-2", metrics.rouge2},
          {"ROUGE-L", metrics.rougeL},
          {"METEOR", metrics.meteor}};
}

MetricReport metrics_from_json(const json& j) {
  MetricReport metrics;
  metrics.bleu = j.at("sacreBLEU").get<double>();
  metrics.rouge1 = j.at("ROUGE-1").get<double>();
  metrics.rouge2 = j.at("ROUGE-2").get<double>();
  metrics.rougeL = j.at("ROUGE-L").get<double>();
  metrics.meteor = j.at("METEOR").get<double>();
  return metrics;
}

std::string grid_csv_row(const RunSpec& spec, const MetricReport* metrics,
                         double runtime_seconds) {
  std::ostringstream row;
  row << loss_name(spec.loss) << ',' << setting_or_na(spec.s) << ','
      << setting_or_na(spec.t) << ',' << wordnet_or_na(spec.use_synonym_mask) << ',';
  if (metrics != nullptr) {
    row << fmt_metric(metrics->bleu) << ',' << fmt_metric(metrics->rouge1) << ','
        << fmt_metric(metrics->rouge2) << ',' << fmt_metric(metrics->rougeL) << ','
        << fmt_metric(metrics->meteor);
  } else {
    row << "NA,NA,NA,NA,NA";
  }
  row << ',' << fmt_metric(runtime_seconds);
  return row.str();
}

TrainConfig resolve_train_config(const RunSpec& spec) {
  TrainConfig config =
      spec.preset == "desk" ? TrainConfig::desk_preset(spec.seed) : TrainConfig{};
  config.seed = spec.seed;
  if (spec.epochs > 0) {
    config.epochs = spec.epochs;
  }
  if (spec.batch_size > 0) {
    config.batch_size = spec.batch_size;
  }
  if (spec.learning_rate > 0.0) {
    config.learning_rate = spec.learning_rate;
  }
  return config;
}

ModelConfig resolve_model_config(const RunSpec& spec, int vocab_size) {
  if (spec.preset == "paper") {
    return ModelConfig::paper_preset(vocab_size, spec.seed);
  }
  if (spec.preset == "desk") {
    return ModelConfig::desk_preset(vocab_size, spec.seed);
  }
  throw ConfigError("unknown preset '" + spec.preset + "' (expected desk or paper)");
}

SmoothingConfig smoothing_config(const RunSpec& spec) {
  SmoothingConfig config;
  config.s = spec.s.value_or(0.0);
  config.t = spec.t;
  config.use_synonym_mask = spec.use_synonym_mask.value_or(false);
  return config;
}

std::vector<TokenList> ids_to_tokens(const std::vector<TokenIds>& sequences,
                                     const Vocabulary& vocab) {
  std::vector<TokenList> out;
  out.reserve(sequences.size());
  for (const auto& ids : sequences) {
    TokenList tokens;
    for (int id : ids) {
      if (id == kEosIndex) {
        break;
      }
      tokens.push_back(vocab.token(id));
    }
    out.push_back(std::move(tokens));
  }
  return out;
}

int jobs_cap(int jobs) {
  if (jobs < 1) {
    jobs = 1;
  }
  if (const char* env = std::getenv("SEMSMOOTH_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && jobs > cap) {
      jobs = cap;
    }
  }
  return jobs;
}

}  // namespace

std::string loss_name(LossKind kind) {
  return kind == LossKind::cross_entropy ? "ce" : "kl";
}

LossKind parse_loss(std::string_view name) {
  if (name == "ce") {
    return LossKind::cross_entropy;
  }
  if (name == "kl") {
    return LossKind::kl_divergence;
  }
  throw ConfigError("unknown loss '" + std::string(name) + "' (expected ce or kl)");
}

void RunSpec::validate() const {
  if (t.has_value() && !s.has_value()) {
    throw ConfigError("a threshold t requires a smoothing factor s");
  }
  if (use_synonym_mask.has_value() && !t.has_value()) {
    throw ConfigError("the synonym mask w requires a threshold t");
  }
  if (s.has_value() && (*s < 0.0 || *s >= 1.0)) {
    throw ConfigError("s must be in [0, 1)");
  }
  if (t.has_value() && (*t < 0.0 || *t > 1.0)) {
    throw ConfigError("t must be in [0, 1]");
  }
  if (use_synonym_mask.value_or(false) && lexicon_path.empty()) {
    throw ConfigError("--wordnet 1 requires --lexicon");
  }
  if (preset != "desk" && preset != "paper") {
    throw ConfigError("unknown preset '" + preset + "' (expected desk or paper)");
  }
}

std::string RunSpec::cell_name() const {
  std::string name = loss_name(loss);
  name += "_s" + setting_or_na(s);
  name += "_t" + setting_or_na(t);
  name += "_w" + wordnet_or_na(use_synonym_mask);
  return name;
}

std::vector<RunSpec> enumerate_grid_cells(const RunSpec& base) {
  std::vector<RunSpec> cells;
  const double s_values[] = {0.1, 0.2};
  const double t_values[] = {0.0, 0.5, 0.8};
  for (LossKind loss : {LossKind::cross_entropy, LossKind::kl_divergence}) {
    RunSpec cell = base;
    cell.loss = loss;
    cell.s.reset();
    cell.t.reset();
    cell.use_synonym_mask.reset();
    cells.push_back(cell);  // no smoothing
    for (double s : s_values) {
      cell.s = s;
      cell.t.reset();
      cell.use_synonym_mask.reset();
      cells.push_back(cell);  // plain uniform smoothing
    }
    for (double s : s_values) {
      for (double t : t_values) {
        for (bool w : {false, true}) {
          cell.s = s;
          cell.t = t;
          cell.use_synonym_mask = w;
          cells.push_back(cell);
        }
      }
    }
  }
  return cells;
}

TrainingAssets prepare_training_assets(const RunSpec& spec) {
  spec.validate();
  if (spec.corpus_path.empty()) {
    throw ConfigError("--corpus is required");
  }
  if (spec.embeddings_path.empty()) {
    throw ConfigError("--embeddings is required");
  }

  TrainingAssets assets;
  const auto conversations = load_corpus(spec.corpus_path);
  assets.vocab = build_vocab(conversations, spec.min_count);
  auto [file_vocab, file_matrix] = load_embeddings(spec.embeddings_path);
  assets.embeddings = embeddings_for_vocabulary(assets.vocab, file_vocab, file_matrix);
  assets.examples = build_examples(conversations, assets.vocab);

  if (spec.use_synonym_mask.value_or(false)) {
    assets.lexicon = load_synonyms(spec.lexicon_path);
  }

  if (!spec.s.has_value()) {
    assets.policy = TargetPolicy::hard();
  } else if (!spec.t.has_value()) {
    assets.policy = TargetPolicy::uniform(*spec.s);
  } else {
    auto table = std::make_shared<TargetTable>(precompute_target_table(
        assets.vocab, assets.embeddings, smoothing_config(spec),
        assets.lexicon.has_value() ? &*assets.lexicon : nullptr));
    assets.policy = TargetPolicy::table(std::move(table));
  }
  return assets;
}

void save_target_table(const TargetTable& table, const std::string& path) {
  json entries = json::array();
  for (const auto& row : table.rows) {
    json support = json::array();
    for (const auto& [index, p] : row.support) {
      support.push_back({index, p});
    }
    entries.push_back({row.correct_index, row.correct_probability, std::move(support)});
  }
  json j;
  j["format"] = "semsmooth-targets";
  j["version"] = 1;
  j["vocab_size"] = table.vocab_size();
  j["config"] = {{"s", table.config.s},
                 {"t", table.config.t.has_value() ? json(*table.config.t) : json(nullptr)},
                 {"w", table.config.use_synonym_mask}};
  const std::string entries_text = entries.dump();
  j["checksum"] = checksum_hex(entries_text);
  j["entries"] = std::move(entries);
  write_text_file(path, j.dump() + "\n");
}

TargetTable load_target_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open target table: " + path);
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError("corrupt target table: " + std::string(e.what()));
  }
  if (j.value("format", "") != "semsmooth-targets") {
    throw FormatError("not a target-table file: " + path);
  }
  if (j.at("checksum").get<std::string>() != checksum_hex(j.at("entries").dump())) {
    throw FormatError("target table checksum mismatch: " + path);
  }

  TargetTable table;
  table.config.s = j.at("config").at("s").get<double>();
  if (!j.at("config").at("t").is_null()) {
    table.config.t = j.at("config").at("t").get<double>();
  }
  table.config.use_synonym_mask = j.at("config").at("w").get<bool>();
  const int k = j.at("vocab_size").get<int>();
  for (const auto& entry : j.at("entries")) {
    TargetDistribution dist;
    dist.correct_index = entry.at(0).get<int>();
    dist.correct_probability = entry.at(1).get<double>();
    dist.vocab_size = k;
    for (const auto& pair : entry.at(2)) {
      dist.support.emplace_back(pair.at(0).get<int>(), pair.at(1).get<double>());
    }
    table.rows.push_back(std::move(dist));
  }
  return table;
}

std::string cmd_build_targets(const RunSpec& spec) {
  spec.validate();
  if (!spec.t.has_value()) {
    throw ConfigError("build-targets requires --s and --t");
  }
  TrainingAssets assets = prepare_training_assets(spec);
  const std::string path = (fs::path(spec.out_dir) / "targets.json").string();
  save_target_table(*assets.policy.table_ptr(), path);
  return path;
}

InspectionRecord cmd_inspect(const RunSpec& spec, const std::string& word, bool as_csv,
                             std::ostream& out) {
  spec.validate();
  if (!spec.t.has_value()) {
    throw ConfigError("inspect requires --s and --t");
  }
  TrainingAssets assets = prepare_training_assets(spec);
  const InspectionRecord record =
      inspect_distribution(word, *assets.policy.table_ptr(), assets.vocab);

  if (as_csv) {
    out << record.word << ',' << fmt_full(record.correct_probability) << '\n';
    for (const auto& [token, p] : record.support) {
      out << token << ',' << fmt_full(p) << '\n';
    }
    return record;
  }
  json j;
  j["word"] = record.word;
  j["index"] = record.index;
  j["config"] = {{"s", record.config.s},
                 {"t", record.config.t.has_value() ? json(*record.config.t) : json(nullptr)},
                 {"w", record.config.use_synonym_mask}};
  j["correct_probability"] = record.correct_probability;
  json support = json::array();
  for (const auto& [token, p] : record.support) {
    support.push_back({{"token", token}, {"probability", p}});
  }
  j["support"] = std::move(support);
  j["support_size"] = record.support_size;
  if (!record.note.empty()) {
    j["note"] = record.note;
  }
  out << j.dump(2) << '\n';
  return record;
}

TrainResult cmd_train(const RunSpec& spec) {
  spec.validate();
  if (spec.out_dir.empty()) {
    throw ConfigError("--out is required");
  }
  TrainingAssets assets = prepare_training_assets(spec);
  const ModelConfig model_config = resolve_model_config(spec, assets.vocab.size());
  const TrainConfig train_config = resolve_train_config(spec);

  ModelParameters params = init_model(model_config, assets.embeddings);
  TrainResult result =
      train(params, assets.examples, assets.policy, spec.loss, train_config);

  fs::create_directories(spec.out_dir);
  save_checkpoint((fs::path(spec.out_dir) / "checkpoint.ckpt").string(), params,
                  assets.vocab, train_config.seed, train_config.epochs);

  std::ostringstream curve;
  curve << "epoch,loss\n";
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    curve << (e + 1) << ',' << fmt_full(result.epoch_losses[e]) << '\n';
  }
  write_text_file((fs::path(spec.out_dir) / "loss_curve.csv").string(), curve.str());

  json j = runspec_to_json(spec);
  j["train"] = {{"epochs", train_config.epochs},
                {"batch_size", train_config.batch_size},
                {"learning_rate", train_config.learning_rate},
                {"clip_norm", train_config.clip_norm},
                {"weight_decay", train_config.weight_decay}};
  j["model"] = {{"n_layers", model_config.n_layers},
                {"d_model", model_config.d_model},
                {"n_heads", model_config.n_heads},
                {"d_ff", model_config.d_ff},
                {"dropout", model_config.dropout},
                {"vocab_size", model_config.vocab_size}};
  write_text_file((fs::path(spec.out_dir) / "runspec.json").string(), j.dump(2) + "\n");
  return result;
}

namespace {

EvalReport finish_eval_report(const RunSpec& spec, MetricReport metrics,
                              double runtime_seconds) {
  EvalReport report;
  report.spec = spec;
  report.metrics = metrics;
  report.runtime_seconds = runtime_seconds;

  if (!spec.out_dir.empty()) {
    json j;
    j["runspec"] = runspec_to_json(spec);
    j["metrics"] = metrics_to_json(metrics);
    j["timing"] = {{"runtime_seconds", runtime_seconds}};
    write_text_file((fs::path(spec.out_dir) / "report.json").string(), j.dump(2) + "\n");
    std::string csv(kGridCsvHeader);
    csv += '\n';
    csv += grid_csv_row(spec, &metrics, runtime_seconds) + "\n";
    write_text_file((fs::path(spec.out_dir) / "report.csv").string(), csv);
  }
  return report;
}

}  // namespace

EvalReport cmd_evaluate(const RunSpec& spec, const std::string& checkpoint_path,
                        const std::string& eval_corpus_path) {
  const auto start = std::chrono::steady_clock::now();
  Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  const auto conversations = load_corpus(eval_corpus_path);
  const auto examples = build_examples(conversations, checkpoint.vocab);
  if (examples.empty()) {
    throw ConfigError("evaluation corpus produced no examples");
  }

  std::vector<TokenIds> hyp_ids;
  std::vector<TokenIds> ref_ids;
  hyp_ids.reserve(examples.size());
  ref_ids.reserve(examples.size());
  for (const auto& example : examples) {
    hyp_ids.push_back(
        greedy_decode(checkpoint.params, example.context_ids, spec.max_decode_len));
    ref_ids.push_back(example.response_ids);
  }
  SynonymLexicon lexicon;
  if (!spec.lexicon_path.empty()) {
    lexicon = load_synonyms(spec.lexicon_path);
  }
  const MetricReport metrics =
      evaluate_run(ids_to_tokens(hyp_ids, checkpoint.vocab),
                   ids_to_tokens(ref_ids, checkpoint.vocab), lexicon);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return finish_eval_report(spec, metrics, seconds);
}

EvalReport cmd_evaluate_files(const RunSpec& spec, const std::string& hyp_path,
                              const std::string& ref_path) {
  const auto start = std::chrono::steady_clock::now();
  auto read_lines = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) {
      throw FormatError("cannot open file: " + path);
    }
    std::vector<TokenList> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') {
        line.pop_back();
      }
      TokenList tokens;
      std::istringstream fields(line);
      std::string token;
      while (fields >> token) {
        tokens.push_back(token);
      }
      lines.push_back(std::move(tokens));
    }
    return lines;
  };
  const auto hyps = read_lines(hyp_path);
  const auto refs = read_lines(ref_path);
  if (hyps.size() != refs.size()) {
    throw ConfigError("hypothesis file has " + std::to_string(hyps.size()) +
                      " lines but reference file has " + std::to_string(refs.size()));
  }
  SynonymLexicon lexicon;
  if (!spec.lexicon_path.empty()) {
    lexicon = load_synonyms(spec.lexicon_path);
  }
  const MetricReport metrics = evaluate_run(hyps, refs, lexicon);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return finish_eval_report(spec, metrics, seconds);
}

GridResult cmd_grid(const RunSpec& base, const std::string& eval_corpus_path, int jobs,
                    bool resume, bool seed_per_cell) {
  base.validate();
  if (base.out_dir.empty()) {
    throw ConfigError("--out is required");
  }
  const std::string eval_corpus =
      eval_corpus_path.empty() ? base.corpus_path : eval_corpus_path;

  std::vector<RunSpec> cells = enumerate_grid_cells(base);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cells[i].out_dir = (fs::path(base.out_dir) / "cells" / cells[i].cell_name()).string();
    if (seed_per_cell) {
      cells[i].seed = base.seed + i;
    }
  }

  GridResult result;
  result.cells.resize(cells.size());

  auto run_cell = [&](std::size_t index) {
    GridCellResult& cell_result = result.cells[index];
    const RunSpec& cell = cells[index];
    cell_result.spec = cell;
    const fs::path marker = fs::path(cell.out_dir) / "done";
    const fs::path report_path = fs::path(cell.out_dir) / "report.json";
    if (resume && fs::exists(marker) && fs::exists(report_path)) {
      try {
        std::ifstream in(report_path);
        json j;
        in >> j;
        cell_result.metrics = metrics_from_json(j.at("metrics"));
        cell_result.runtime_seconds = j.at("timing").at("runtime_seconds").get<double>();
        cell_result.ok = true;
        cell_result.resumed = true;
        return;
      } catch (const std::exception&) {
        // Fall through and recompute the cell.
      }
    }
    const auto start = std::chrono::steady_clock::now();
    try {
      cmd_train(cell);
      RunSpec eval_spec = cell;
      const EvalReport report = cmd_evaluate(
          eval_spec, (fs::path(cell.out_dir) / "checkpoint.ckpt").string(), eval_corpus);
      cell_result.metrics = report.metrics;
      cell_result.ok = true;
      write_text_file(marker.string(), "ok\n");
    } catch (const std::exception& e) {
      cell_result.ok = false;
      cell_result.error = e.what();
    }
    cell_result.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  jobs = jobs_cap(jobs);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      run_cell(i);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(jobs));
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
          run_cell(i);
        }
      });
    }
    for (auto& worker : workers) {
      worker.join();
    }
  }

  std::ostringstream csv;
  csv << kGridCsvHeader << '\n';
  json cells_json = json::array();
  for (const auto& cell : result.cells) {
    csv << grid_csv_row(cell.spec, cell.ok ? &cell.metrics : nullptr,
                        cell.runtime_seconds)
        << '\n';
    json c;
    c["name"] = cell.spec.cell_name();
    c["runspec"] = runspec_to_json(cell.spec);
    c["status"] = cell.ok ? "ok" : "failed";
    if (!cell.error.empty()) {
      c["error"] = cell.error;
    }
    if (cell.ok) {
      c["metrics"] = metrics_to_json(cell.metrics);
    }
    c["timing"] = {{"runtime_seconds", cell.runtime_seconds}};
    cells_json.push_back(std::move(c));
  }
  result.csv_path = (fs::path(base.out_dir) / "grid.csv").string();
  result.json_path = (fs::path(base.out_dir) / "grid.json").string();
  write_text_file(result.csv_path, csv.str());
  json grid_json;
  grid_json["eval_corpus"] = eval_corpus;
  grid_json["cells"] = std::move(cells_json);
  write_text_file(result.json_path, grid_json.dump(2) + "\n");
  return result;
}

void cmd_make_synthetic(const SyntheticSpec& spec) {
  if (spec.out_dir.empty()) {
    throw ConfigError("--out is required");
  }
  const ClusterSpec clusters =
      spec.clusters_text.empty() ? default_clusters() : parse_clusters(spec.clusters_text);
  auto [conversations, lexicon] =
      synthetic_corpus(spec.seed, spec.count + spec.heldout, clusters);

  fs::create_directories(spec.out_dir);
  std::vector<Conversation> train_set(conversations.begin(),
                                      conversations.begin() + spec.count);
  std::vector<Conversation> heldout_set(conversations.begin() + spec.count,
                                        conversations.end());
  save_corpus(train_set, (fs::path(spec.out_dir) / "train.jsonl").string());
  save_corpus(heldout_set, (fs::path(spec.out_dir) / "heldout.jsonl").string());

  const auto rows = synthetic_embeddings(spec.seed, conversations, clusters, spec.dim);
  std::ostringstream vectors;
  for (const auto& [word, vector] : rows) {
    vectors << word;
    for (Index i = 0; i < vector.size(); ++i) {
      vectors << ' ' << fmt_full(vector[i]);
    }
    vectors << '\n';
  }
  write_text_file((fs::path(spec.out_dir) / "embeddings.txt").string(), vectors.str());

  std::ostringstream lex;
  for (const auto& [token, synonyms] : lexicon.entries()) {
    if (synonyms.empty()) {
      continue;
    }
    lex << token << '\t';
    bool first = true;
    for (const auto& synonym : synonyms) {
      if (!first) {
        lex << ',';
      }
      lex << synonym;
      first = false;
    }
    lex << '\n';
  }
  write_text_file((fs::path(spec.out_dir) / "lexicon.tsv").string(), lex.str());

  json meta;
  meta["seed"] = spec.seed;
  meta["count"] = spec.count;
  meta["heldout"] = spec.heldout;
  meta["dim"] = spec.dim;
  meta["clusters"] = clusters;
  write_text_file((fs::path(spec.out_dir) / "synthetic_meta.json").string(),
                  meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CLI wiring.
// ---------------------------------------------------------------------------

namespace {

struct CliState {
  RunSpec spec;
  std::string loss_text = "ce";
  std::optional<int> wordnet;
  std::string word;
  bool csv = false;
  std::string checkpoint;
  std::string eval_corpus;
  std::string hyp_path;
  std::string ref_path;
  std::string text;
  int jobs = 1;
  bool resume = false;
  bool seed_per_cell = false;
  SyntheticSpec synthetic;
};

void add_common_options(CLI::App* sub, CliState& state) {
  sub->add_option("--corpus", state.spec.corpus_path, "conversation corpus (JSONL)");
  sub->add_option("--embeddings", state.spec.embeddings_path,
                  "word-vector text file (token v1 ... vd per line)");
  sub->add_option("--lexicon", state.spec.lexicon_path,
                  "synonym lexicon (token<TAB>syn1,syn2,...)");
  sub->add_option("--loss", state.loss_text, "loss kind: ce or kl");
  sub->add_option("--s", state.spec.s, "smoothing factor in [0, 1)");
  sub->add_option("--t", state.spec.t, "cosine threshold in [0, 1]");
  sub->add_option("--wordnet", state.wordnet, "apply the synonym mask (0 or 1)");
  sub->add_option("--seed", state.spec.seed, "random seed");
  sub->add_option("--out", state.spec.out_dir, "output directory");
  sub->add_option("--preset", state.spec.preset, "model preset: desk or paper");
  sub->add_option("--min-count", state.spec.min_count, "vocabulary frequency cutoff");
  sub->add_option("--epochs", state.spec.epochs, "override preset epochs");
  sub->add_option("--batch-size", state.spec.batch_size, "override preset batch size");
  sub->add_option("--lr", state.spec.learning_rate, "override preset learning rate");
  sub->add_option("--max-len", state.spec.max_decode_len, "decode length cap");
}

void finalize_spec(CliState& state) {
  state.spec.loss = parse_loss(state.loss_text);
  if (state.wordnet.has_value()) {
    if (*state.wordnet != 0 && *state.wordnet != 1) {
      throw ConfigError("--wordnet must be 0 or 1");
    }
    state.spec.use_synonym_mask = (*state.wordnet == 1);
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"semantic label smoothing for dialogue generation"};
  app.require_subcommand(1);
  CliState state;

  CLI::App* build = app.add_subcommand("build-targets", "precompute a target table");
  add_common_options(build, state);

  CLI::App* inspect = app.add_subcommand("inspect", "show one word's soft targets");
  add_common_options(inspect, state);
  inspect->add_option("word", state.word, "vocabulary word")->required();
  inspect->add_flag("--csv", state.csv, "emit token,probability rows");

  CLI::App* train_cmd = app.add_subcommand("train", "train one setting");
  add_common_options(train_cmd, state);

  CLI::App* decode_cmd = app.add_subcommand("decode", "greedy-decode a context");
  add_common_options(decode_cmd, state);
  decode_cmd->add_option("--checkpoint", state.checkpoint, "checkpoint file")->required();
  decode_cmd->add_option("--text", state.text, "context turns separated by |")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "score decoded responses");
  add_common_options(evaluate, state);
  evaluate->add_option("--checkpoint", state.checkpoint, "checkpoint file");
  evaluate->add_option("--eval-corpus", state.eval_corpus, "held-out corpus (JSONL)");
  evaluate->add_option("--hyp", state.hyp_path, "tokenized hypothesis file");
  evaluate->add_option("--ref", state.ref_path, "tokenized reference file");

  CLI::App* grid = app.add_subcommand("grid", "run the 30-cell experiment grid");
  add_common_options(grid, state);
  grid->add_option("--eval-corpus", state.eval_corpus, "held-out corpus (JSONL)");
  grid->add_option("--jobs", state.jobs, "cells trained in parallel");
  grid->add_flag("--resume", state.resume, "skip cells with done markers");
  grid->add_flag("--seed-per-cell", state.seed_per_cell,
                 "derive a distinct seed per cell instead of sharing the base seed");

  CLI::App* synth = app.add_subcommand("make-synthetic", "generate the desk corpus");
  synth->add_option("--seed", state.synthetic.seed, "random seed");
  synth->add_option("--count", state.synthetic.count, "training conversations");
  synth->add_option("--heldout", state.synthetic.heldout, "held-out conversations");
  synth->add_option("--dim", state.synthetic.dim, "embedding dimension");
  synth->add_option("--clusters", state.synthetic.clusters_text,
                    "clusters as a,b,c;d,e,f (default built-in)");
  synth->add_option("--out", state.synthetic.out_dir, "output directory");

  try {
    app.parse(argc, argv);
    finalize_spec(state);

    if (build->parsed()) {
      const std::string path = cmd_build_targets(state.spec);
      std::cout << path << '\n';
    } else if (inspect->parsed()) {
      cmd_inspect(state.spec, state.word, state.csv, std::cout);
    } else if (train_cmd->parsed()) {
      const TrainResult result = cmd_train(state.spec);
      std::cout << "final_epoch_loss=" << fmt_full(result.epoch_losses.back()) << '\n';
    } else if (decode_cmd->parsed()) {
      Checkpoint checkpoint = load_checkpoint(state.checkpoint);
      std::vector<std::string> turns;
      std::size_t pos = 0;
      while (pos <= state.text.size()) {
        std::size_t next = state.text.find('|', pos);
        if (next == std::string::npos) {
          next = state.text.size();
        }
        turns.push_back(state.text.substr(pos, next - pos));
        pos = next + 1;
      }
      const TokenIds context = build_context_ids(turns, checkpoint.vocab);
      const TokenIds ids =
          greedy_decode(checkpoint.params, context, state.spec.max_decode_len);
      std::string response;
      for (int id : ids) {
        if (id == kEosIndex) {
          break;
        }
        if (!response.empty()) {
          response += ' ';
        }
        response += checkpoint.vocab.token(id);
      }
      std::cout << response << '\n';
    } else if (evaluate->parsed()) {
      EvalReport report;
      if (!state.hyp_path.empty() || !state.ref_path.empty()) {
        if (state.hyp_path.empty() || state.ref_path.empty()) {
          throw ConfigError("--hyp and --ref must be given together");
        }
        report = cmd_evaluate_files(state.spec, state.hyp_path, state.ref_path);
      } else {
        if (state.checkpoint.empty()) {
          throw ConfigError("evaluate needs --checkpoint (or --hyp/--ref)");
        }
        const std::string corpus =
            state.eval_corpus.empty() ? state.spec.corpus_path : state.eval_corpus;
        if (corpus.empty()) {
          throw ConfigError("evaluate needs --eval-corpus or --corpus");
        }
        report = cmd_evaluate(state.spec, state.checkpoint, corpus);
      }
      std::cout << metrics_to_json(report.metrics).dump(2) << '\n';
    } else if (grid->parsed()) {
      RunSpec base = state.spec;
      GridResult result = cmd_grid(base, state.eval_corpus, state.jobs, state.resume,
                                   state.seed_per_cell);
      int failed = 0;
      for (const auto& cell : result.cells) {
        if (!cell.ok) {
          ++failed;
        }
      }
      std::cout << result.csv_path << '\n';
      if (failed > 0) {
        std::cerr << failed << " of " << result.cells.size() << " cells failed\n";
        return 3;
      }
    } else if (synth->parsed()) {
      cmd_make_synthetic(state.synthetic);
      std::cout << state.synthetic.out_dir << '\n';
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace semsmooth
