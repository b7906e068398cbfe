// reqx: requirement extraction from app reviews with a BiLSTM-attention-CRF tagger.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "reqx/commands.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reqx: extract requirement phrases from app reviews"};
  app.set_version_flag("--version", std::string(REQX_VERSION));
  app.require_subcommand(1);

  reqx::PreprocessOptions pre;
  std::string feature_delim = ",";
  auto* c_pre = app.add_subcommand("preprocess", "Convert an annotated dataset to the JSONL corpus");
  c_pre->add_option("--format", pre.format, "Input format")
      ->required()
      ->check(CLI::IsMember({"rebert-csv", "conllu"}));
  c_pre->add_option("--input", pre.input, "Input file")->required()->check(CLI::ExistingFile);
  c_pre->add_option("--output", pre.output, "Output JSONL corpus")->required();
  c_pre->add_option("--tag-column", pre.tag_column,
                    "CoNLL-U tag column: name, 1-based number, or MISC:<key>")
      ->capture_default_str();
  c_pre->add_option("--feature-delim", feature_delim, "Separator inside the feature cell")
      ->capture_default_str()
      ->check([](const std::string& s) { return s.size() == 1 ? "" : "must be a single character"; });

  reqx::TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "Train one model on the given domains");
  c_train->add_option("--corpus", tr.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  c_train->add_option("--config", tr.config, "Config file")->check(CLI::ExistingFile);
  c_train->add_option("--out", tr.output, "Checkpoint path")->required();
  c_train->add_option("--domains", tr.domains, "Training domains (default: all)")->delimiter(',');
  c_train->add_option("--seed", tr.seed, "Override config seed");
  c_train->add_option("--epochs", tr.epochs, "Override config epochs");

  reqx::CrossvalOptions cv;
  auto* c_cv = app.add_subcommand("crossval", "Leave-one-domain-out cross-validation");
  c_cv->add_option("--corpus", cv.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  c_cv->add_option("--config", cv.config, "Config file")->check(CLI::ExistingFile);
  c_cv->add_option("--out", cv.out_dir, "Output directory")->required();
  c_cv->add_option("--runs", cv.runs, "Override runs_per_fold");
  c_cv->add_option("--epochs", cv.epochs, "Override epochs");
  c_cv->add_option("--seed", cv.seed, "Override seed");
  c_cv->add_option("--jobs", cv.jobs, "Parallel (fold, run) workers")->check(CLI::PositiveNumber);
  c_cv->add_option("--baselines", cv.baselines, "Baseline score JSON")->check(CLI::ExistingFile);
  c_cv->add_flag("--overlap", cv.overlap, "Also report token-overlap matching");
  c_cv->footer(reqx::kConfigSchema);
  c_train->footer(reqx::kConfigSchema);

  reqx::EvaluateOptions ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score a checkpoint on one domain");
  c_ev->add_option("--model", ev.model, "Checkpoint")->check(CLI::ExistingFile);
  c_ev->add_option("--corpus", ev.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--domain", ev.domain, "Domain label")->required();
  c_ev->add_option("--baselines", ev.baselines, "Baseline score JSON")->check(CLI::ExistingFile);
  c_ev->add_option("--out", ev.out_dir, "Write report.json/report.txt here");
  c_ev->add_flag("--overlap", ev.overlap, "Also report token-overlap matching");
  c_ev->add_flag("--oracle", ev.oracle, "Use gold tags as predictions");

  std::string ex_model, ex_input;
  auto* c_ex = app.add_subcommand("extract", "Extract requirements, one review per line");
  c_ex->add_option("--model", ex_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  c_ex->add_option("--input", ex_input, "Text file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*c_pre) {
      pre.feature_delim = feature_delim[0];
      std::cout << reqx::cmd_preprocess(pre).dump(2) << "\n";
    } else if (*c_train) {
      reqx::cmd_train(tr);
    } else if (*c_cv) {
      std::cout << reqx::cmd_crossval(cv).text;
    } else if (*c_ev) {
      if (ev.model.empty() && !ev.oracle) {
        std::cerr << "evaluate: --model is required unless --oracle is set\n";
        return kExitUsage;
      }
      std::cout << reqx::cmd_evaluate(ev).text;
    } else if (*c_ex) {
      reqx::cmd_extract(ex_model, ex_input, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
