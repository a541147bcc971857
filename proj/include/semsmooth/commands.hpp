#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semsmooth/checkpoint.hpp"
#include "semsmooth/corpus.hpp"
#include "semsmooth/losses.hpp"
#include "semsmooth/metrics.hpp"
#include "semsmooth/model.hpp"
#include "semsmooth/smoothing.hpp"

namespace semsmooth {

/// One experiment cell: loss kind plus the (s, t, w) smoothing setting.
/// Absent fields are the grid's NA values. Structural constraint: t needs s,
/// w needs t.
struct RunSpec {
  LossKind loss = LossKind::cross_entropy;
  std::optional<double> s;
  std::optional<double> t;
  std::optional<bool> use_synonym_mask;
  std::uint64_t seed = 0;
  std::string preset = "desk";  // desk | paper

  std::string corpus_path;
  std::string embeddings_path;
  std::string lexicon_path;
  std::string out_dir;

  int min_count = 1;
  int epochs = 0;          // 0 = preset default
  int batch_size = 0;      // 0 = preset default
  double learning_rate = 0.0;  // 0 = preset default
  int max_decode_len = 32;

  void validate() const;
  std::string cell_name() const;  // e.g. "ce_s0.1_t0.5_w0"
};

std::string loss_name(LossKind kind);
LossKind parse_loss(std::string_view name);

/// The 30 grid cells of the experiment matrix, in table order: per loss,
/// the no-smoothing baseline, two uniform-smoothing cells, then
/// s x t x w = 2 x 3 x 2 semantic cells.
std::vector<RunSpec> enumerate_grid_cells(const RunSpec& base);

inline constexpr std::string_view kGridCsvHeader =
    "loss,s,t,w,sacreBLEU,ROUGE-1,ROUGE-2,ROUGE-L,METEOR,runtime_seconds";

/// Everything cmd_train needs, assembled from the spec's paths: corpus
/// vocabulary, embeddings aligned to it, training examples, and the target
/// policy implied by (s, t, w).
struct TrainingAssets {
  Vocabulary vocab;
  EmbeddingMatrix embeddings;
  std::vector<TrainingExample> examples;
  std::optional<SynonymLexicon> lexicon;
  TargetPolicy policy;
};

TrainingAssets prepare_training_assets(const RunSpec& spec);

/// Sparse target-table file (JSON with a content checksum).
void save_target_table(const TargetTable& table, const std::string& path);
TargetTable load_target_table(const std::string& path);

struct EvalReport {
  RunSpec spec;
  MetricReport metrics;
  double runtime_seconds = 0.0;
};

/// Writes <out>/targets.json.
std::string cmd_build_targets(const RunSpec& spec);

/// Prints the inspection record (JSON, or token,probability CSV rows with
/// the correct label first) to `out`.
InspectionRecord cmd_inspect(const RunSpec& spec, const std::string& word, bool as_csv,
                             std::ostream& out);

/// Trains per the spec; writes <out>/checkpoint.ckpt, <out>/loss_curve.csv,
/// and <out>/runspec.json. Returns the per-epoch losses.
TrainResult cmd_train(const RunSpec& spec);

/// Greedy-decodes every context of the corpus against the checkpoint and
/// scores the result; writes <out>/report.json and <out>/report.csv.
EvalReport cmd_evaluate(const RunSpec& spec, const std::string& checkpoint_path,
                        const std::string& eval_corpus_path);

/// Scores two pre-tokenized parallel text files (one sentence per line).
EvalReport cmd_evaluate_files(const RunSpec& spec, const std::string& hyp_path,
                              const std::string& ref_path);

struct GridCellResult {
  RunSpec spec;
  bool ok = false;
  std::string error;
  MetricReport metrics;
  double runtime_seconds = 0.0;
  bool resumed = false;
};

struct GridResult {
  std::vector<GridCellResult> cells;
  std::string csv_path;
  std::string json_path;
};

/// Trains and evaluates every grid cell; cells run independently (optionally
/// `jobs` at a time) and failures are recorded without stopping the grid.
/// With `resume`, cells whose done-marker exists are loaded, not recomputed.
/// Cells share the base seed unless seed_per_cell derives base + cell index.
GridResult cmd_grid(const RunSpec& base, const std::string& eval_corpus_path, int jobs,
                    bool resume, bool seed_per_cell = false);

struct SyntheticSpec {
  std::uint64_t seed = 0;
  int count = 2000;
  int heldout = 200;
  int dim = 16;
  std::string clusters_text;  // empty = default clusters
  std::string out_dir;
};

/// Writes train.jsonl, heldout.jsonl, embeddings.txt, lexicon.tsv, and
/// synthetic_meta.json.
void cmd_make_synthetic(const SyntheticSpec& spec);

/// Full command-line entry point. Returns the process exit code:
/// 0 success, 1 usage/config error, 2 data/format error, 3 numeric failure.
int run_cli(int argc, const char* const* argv);

}  // namespace semsmooth
