#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "webphish/baselines.hpp"
#include "webphish/checkpoint.hpp"
#include "webphish/corpus.hpp"
#include "webphish/features.hpp"
#include "webphish/fetcher.hpp"
#include "webphish/metrics.hpp"
#include "webphish/projection.hpp"
#include "webphish/synthetic.hpp"
#include "webphish/training.hpp"

namespace webphish::cli {

/// Process exit status contract.
enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumeric = 4 };

namespace detail {

namespace fs = std::filesystem;

struct ModelFlags {
  std::string variant = "full";
  std::size_t conv_layers = 1;
  std::vector<std::size_t> fc_units{32, 16};
  std::size_t filters = 16;
  std::size_t embed_dim = 16;
  std::size_t kernel_width = 8;
  std::size_t url_len = 180;
  std::size_t html_len = 2000;
  bool no_embedding = false;

  void add(CLI::App* app) {
    app->add_option("--variant", variant, "Model variant: full, url_only or html_only")
        ->check(CLI::IsMember({"full", "url_only", "html_only"}))
        ->capture_default_str();
    app->add_option("--conv-layers", conv_layers, "Convolution layers per branch (1-3)")->capture_default_str();
    app->add_option("--fc-units", fc_units, "Hidden fully connected widths, 1-3 values")
        ->delimiter(',')
        ->capture_default_str();
    app->add_option("--filters", filters, "Convolution filters per layer")->capture_default_str();
    app->add_option("--embed-dim", embed_dim, "Character embedding width")->capture_default_str();
    app->add_option("--kernel-width", kernel_width, "Convolution kernel width")->capture_default_str();
    app->add_option("--url-len", url_len, "URL characters kept (truncate/pad)")->capture_default_str();
    app->add_option("--html-len", html_len, "HTML characters kept (truncate/pad)")->capture_default_str();
    app->add_flag("--no-embedding", no_embedding, "Use frozen one-hot character vectors instead of embeddings");
  }

  ModelConfig build() const {
    ModelConfig c;
    c.variant = parse_variant(variant);
    c.conv_layers = conv_layers;
    c.fc_units = fc_units;
    c.conv_filters = filters;
    c.embed_dim = embed_dim;
    c.kernel_width = kernel_width;
    c.url_len = url_len;
    c.html_len = html_len;
    c.use_embedding = !no_embedding;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::size_t epochs = 20;
  std::size_t batch_size = 20;
  std::size_t patience = 3;
  double learning_rate = 0.0015;
  bool no_early_stopping = false;
  bool class_weighting = false;

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Maximum training epochs")->capture_default_str();
    app->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
    app->add_option("--patience", patience, "Early-stopping patience in epochs")->capture_default_str();
    app->add_option("--lr", learning_rate, "Adam learning rate")->capture_default_str();
    app->add_flag("--no-early-stopping", no_early_stopping, "Train for all epochs without a validation monitor");
    app->add_flag("--class-weighting", class_weighting, "Weight the loss by inverse class frequency");
  }

  TrainConfig build(std::uint64_t seed) const {
    TrainConfig t;
    t.max_epochs = epochs;
    t.batch_size = batch_size;
    t.patience = patience;
    t.learning_rate = learning_rate;
    t.early_stopping = !no_early_stopping;
    t.class_weighting = class_weighting;
    t.seed = seed;
    t.validate();
    return t;
  }
};

inline std::vector<WebPageSample> load_samples(const std::string& path, std::ostream& log, bool verbose) {
  auto loaded = load_manifest(path);
  if (verbose) log << path << ":\n" << loaded.report.to_text();
  return std::move(loaded.samples);
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

template <typename F>
void write_with(const fs::path& path, F&& fn) {
  std::ostringstream os;
  fn(os);
  write_text(path, os.str());
}

inline nlohmann::ordered_json evaluation_json(const std::vector<double>& scores, const std::vector<int>& labels,
                                              double threshold) {
  std::vector<int> preds;
  for (double s : scores) preds.push_back(label_value(decide(s, threshold)));
  auto j = report_json(report(confusion(labels, preds)));
  bool both = false;
  for (int y : labels) both |= y != labels.front();
  j["auc"] = both ? nlohmann::ordered_json(roc_auc(scores, labels).auc) : nlohmann::ordered_json(nullptr);
  return j;
}

inline LabeledTable concat_table(const Classifier& model, const std::vector<WebPageSample>& samples) {
  LabeledTable t;
  for (std::size_t k = 0; k < model.config.concat_width(); ++k) t.columns.push_back("c" + std::to_string(k));
  for (const auto& s : samples) {
    const auto v = extract_concat_features(model, s);
    t.ids.push_back(s.id);
    t.labels.push_back(label_value(s.label));
    t.rows.emplace_back(v.begin(), v.end());
  }
  return t;
}

inline LabeledTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_labeled_csv(in);
}

}  // namespace detail

/// Parses `args` (without the program name) and runs exactly one subcommand.
/// Errors are reported on `err` as a single line "error: <kind>: <message>".
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Character-level phishing page detector: corpus building, training, evaluation and analysis",
               "webphish"};
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "Read options from a key=value file (one per line, [subcommand] sections); flags win");
  std::uint64_t seed = 42;
  bool verbose = false;
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "Progress and sanitization details on stderr");

  // fetch
  auto* fetch_cmd = app.add_subcommand("fetch", "Download pages for a URL list into a corpus directory");
  std::string urls_path, fetch_label, fetch_out;
  CorpusOptions fetch_opt;
  fetch_cmd->add_option("--urls", urls_path, "URL list, one per line, # comments")->required();
  fetch_cmd->add_option("--label", fetch_label, "Label for every URL: legitimate or phishing")
      ->required()
      ->check(CLI::IsMember({"legitimate", "phishing"}));
  fetch_cmd->add_option("--out", fetch_out, "Corpus directory (manifest.jsonl, html/, fetch_report.json)")->required();
  fetch_cmd->add_option("--concurrency", fetch_opt.concurrency, "Requests in flight")->capture_default_str();
  fetch_cmd->add_option("--rate-limit", fetch_opt.rate_limit, "Requests per second overall (0 = unlimited)")
      ->capture_default_str();
  fetch_cmd->add_option("--per-host-interval", fetch_opt.per_host_interval, "Seconds between requests to one host")
      ->capture_default_str();
  fetch_cmd->add_option("--timeout", fetch_opt.timeout_seconds, "Connect and read timeout in seconds")
      ->capture_default_str();
  fetch_cmd->add_option("--max-redirects", fetch_opt.max_redirects, "Redirects followed per URL")
      ->capture_default_str();
  fetch_cmd->add_option("--user-agent", fetch_opt.user_agent, "User-Agent header")->capture_default_str();

  // prepare
  auto* prepare_cmd = app.add_subcommand("prepare", "Sanitize manifests and write stratified train/validation/test splits");
  std::vector<std::string> prepare_in;
  std::string prepare_out;
  SplitRatios ratios;
  prepare_cmd->add_option("--manifest", prepare_in, "Input manifest(s); repeat to merge")->required();
  prepare_cmd->add_option("--out", prepare_out, "Output directory for train/validation/test.jsonl")->required();
  prepare_cmd->add_option("--train", ratios.train, "Training fraction")->capture_default_str();
  prepare_cmd->add_option("--validation", ratios.validation, "Validation fraction")->capture_default_str();
  prepare_cmd->add_option("--test", ratios.test, "Test fraction")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and save a checkpoint");
  std::string train_manifest, val_manifest, model_out, history_out;
  ModelFlags model_flags;
  TrainFlags train_flags;
  train_cmd->add_option("--manifest", train_manifest, "Training manifest")->required();
  train_cmd->add_option("--val", val_manifest, "Validation manifest (needed unless --no-early-stopping)");
  train_cmd->add_option("--out", model_out, "Checkpoint path")->required();
  train_cmd->add_option("--history", history_out, "Per-epoch metrics CSV");
  model_flags.add(train_cmd);
  train_flags.add(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  std::string eval_model, eval_manifest, eval_report, eval_roc;
  double threshold = 0.5;
  eval_cmd->add_option("--model", eval_model, "Checkpoint path")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "Evaluation manifest")->required();
  eval_cmd->add_option("--report", eval_report, "Write the JSON metrics report here instead of stdout");
  eval_cmd->add_option("--roc", eval_roc, "ROC curve CSV (threshold,fpr,tpr)");
  eval_cmd->add_option("--threshold", threshold, "Decision threshold (phishing iff score > threshold)")
      ->capture_default_str();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Score one page or every record of a manifest");
  std::string predict_model, predict_url, predict_html_file, predict_manifest;
  predict_cmd->add_option("--model", predict_model, "Checkpoint path")->required();
  auto* url_opt = predict_cmd->add_option("--url", predict_url, "Page URL");
  predict_cmd->add_option("--html-file", predict_html_file, "File holding the page HTML")->needs(url_opt);
  predict_cmd->add_option("--manifest", predict_manifest, "Score every record instead")->excludes(url_opt);
  predict_cmd->add_option("--threshold", threshold, "Decision threshold")->capture_default_str();

  // finetune
  auto* finetune_cmd = app.add_subcommand("finetune", "Reset the output layer of a donor model and retrain on new data");
  std::string donor_path, ft_manifest, ft_val, ft_out, ft_history;
  TrainFlags ft_flags;
  finetune_cmd->add_option("--model", donor_path, "Donor checkpoint")->required();
  finetune_cmd->add_option("--manifest", ft_manifest, "Training manifest")->required();
  finetune_cmd->add_option("--val", ft_val, "Validation manifest (needed unless --no-early-stopping)");
  finetune_cmd->add_option("--out", ft_out, "Output checkpoint")->required();
  finetune_cmd->add_option("--history", ft_history, "Per-epoch metrics CSV");
  ft_flags.add(finetune_cmd);

  // features
  auto* features_cmd = app.add_subcommand("features", "Extract the 31 handcrafted URL/HTML features to CSV");
  std::string features_manifest, features_out, words_path;
  features_cmd->add_option("--manifest", features_manifest, "Input manifest")->required();
  features_cmd->add_option("--out", features_out, "Output CSV")->required();
  features_cmd->add_option("--words", words_path, "Misleading-word list (default: built-in list)");

  // baseline
  auto* baseline_cmd = app.add_subcommand("baseline", "Train and evaluate a classical model on feature CSVs");
  std::string method = "rf", baseline_train, baseline_test, baseline_report, importance_out;
  ForestConfig forest;
  LogRegConfig logreg;
  baseline_cmd->add_option("--method", method, "rf (random forest) or logreg (L1 logistic regression)")
      ->check(CLI::IsMember({"rf", "logreg"}))
      ->capture_default_str();
  baseline_cmd->add_option("--train", baseline_train, "Training feature CSV")->required();
  baseline_cmd->add_option("--test", baseline_test, "Test feature CSV")->required();
  baseline_cmd->add_option("--report", baseline_report, "Write the JSON report here instead of stdout");
  baseline_cmd->add_option("--importance", importance_out, "Feature importance CSV (rf only)");
  baseline_cmd->add_option("--trees", forest.trees, "Forest size")->capture_default_str();
  baseline_cmd->add_option("--candidates", forest.candidate_features,
                           "Features tried per split (0 = floor(sqrt(features)))")
      ->capture_default_str();
  baseline_cmd->add_option("--lambda", logreg.l1_lambda, "L1 strength")->capture_default_str();
  baseline_cmd->add_option("--logreg-epochs", logreg.epochs, "Full-batch iterations")->capture_default_str();
  baseline_cmd->add_option("--logreg-lr", logreg.learning_rate, "Step size")->capture_default_str();

  // project
  auto* project_cmd = app.add_subcommand("project", "2-D projection of feature vectors (t-SNE or PCA)");
  std::string project_input, project_model, project_manifest, project_out, concat_out;
  std::string project_method = "tsne";
  TsneConfig tsne;
  project_cmd->add_option("--input", project_input, "Labeled feature CSV (id,label,columns...)");
  auto* pm = project_cmd->add_option("--model", project_model, "Checkpoint whose concatenation layer is projected");
  project_cmd->add_option("--manifest", project_manifest, "Manifest to run through --model")->needs(pm);
  project_cmd->add_option("--concat-out", concat_out, "Also write the concatenation features CSV")->needs(pm);
  project_cmd->add_option("--method", project_method, "tsne or pca")
      ->check(CLI::IsMember({"tsne", "pca"}))
      ->capture_default_str();
  project_cmd->add_option("--out", project_out, "Output CSV (id,label,x,y)")->required();
  project_cmd->add_option("--perplexity", tsne.perplexity, "t-SNE perplexity")->capture_default_str();
  project_cmd->add_option("--iterations", tsne.iterations, "t-SNE iterations")->capture_default_str();
  project_cmd->add_option("--tsne-lr", tsne.learning_rate, "t-SNE learning rate")->capture_default_str();

  // gen-synthetic
  auto* synth_cmd = app.add_subcommand("gen-synthetic", "Generate the seeded synthetic corpus used by the acceptance suite");
  std::string synth_out, profile = "primary";
  SyntheticConfig synth;
  synth_cmd->add_option("--out", synth_out, "Output manifest (inline HTML)")->required();
  synth_cmd->add_option("--count", synth.count, "Total samples")->capture_default_str();
  synth_cmd->add_option("--ratio", synth.legit_per_phish, "Legitimate pages per phishing page")->capture_default_str();
  synth_cmd->add_option("--url-signal-rate", synth.url_signal_rate, "Share of phishing URLs carrying markers")
      ->capture_default_str();
  synth_cmd->add_option("--html-signal-rate", synth.html_signal_rate, "Share of phishing pages carrying markers")
      ->capture_default_str();
  synth_cmd->add_option("--profile", profile, "Marker family: primary or shifted")
      ->check(CLI::IsMember({"primary", "shifted"}))
      ->capture_default_str();

  std::vector<std::string> argv_store{"webphish"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    // --help and --help-all print through CLI11's own formatter.
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return kUsage;
  }

  auto epoch_logger = [&](const EpochRecord& e) {
    if (verbose)
      err << "epoch " << e.epoch << " train_loss " << e.train_loss << " train_acc " << e.train_acc << " val_loss "
          << e.val_loss << " val_acc " << e.val_acc << '\n';
  };

  try {
    if (fetch_cmd->parsed()) {
      const auto urls = read_url_list(urls_path);
      const auto rep = build_corpus(urls, parse_label(fetch_label), fetch_out, fetch_opt);
      out << rep.summary_json().dump(2) << '\n';
    } else if (prepare_cmd->parsed()) {
      std::vector<WebPageSample> all;
      SanitizationReport total;
      for (const auto& m : prepare_in) {
        auto loaded = load_manifest(m);
        total += loaded.report;
        for (auto& s : loaded.samples) all.push_back(std::move(s));
      }
      // Duplicates across manifests are dropped too.
      auto merged = sanitize(std::move(all));
      total.dropped_duplicate += merged.report.dropped_duplicate;
      total.kept = merged.samples.size();
      const auto parts = split(merged.samples, seed, ratios);
      write_manifest(parts.train, fs::path(prepare_out) / "train.jsonl");
      write_manifest(parts.validation, fs::path(prepare_out) / "validation.jsonl");
      write_manifest(parts.test, fs::path(prepare_out) / "test.jsonl");
      write_text(fs::path(prepare_out) / "sanitization_report.txt", total.to_text());
      out << total.to_text() << "train: " << parts.train.size() << "\nvalidation: " << parts.validation.size()
          << "\ntest: " << parts.test.size() << '\n';
    } else if (train_cmd->parsed()) {
      const auto cfg = model_flags.build();
      const auto tcfg = train_flags.build(seed);
      if (tcfg.early_stopping && val_manifest.empty())
        throw ConfigError("--val is required unless --no-early-stopping is given");
      const auto train_set = load_samples(train_manifest, err, verbose);
      const auto val_set = val_manifest.empty() ? std::vector<WebPageSample>{} : load_samples(val_manifest, err, verbose);
      const auto fitted = fit(cfg, tcfg, train_set, val_set, epoch_logger);
      save_checkpoint(fitted.model, model_out);
      if (!history_out.empty()) write_text(history_out, fitted.history.to_csv());
      out << fitted.history.to_csv();
    } else if (eval_cmd->parsed()) {
      const auto model = load_checkpoint(eval_model);
      const auto samples = load_samples(eval_manifest, err, verbose);
      if (samples.empty()) throw DataError("evaluation manifest has no usable samples");
      std::vector<int> labels;
      for (const auto& s : samples) labels.push_back(label_value(s.label));
      const auto scores = model.scores(samples);
      const auto j = evaluation_json(scores, labels, threshold);
      if (eval_report.empty())
        out << j.dump(2) << '\n';
      else
        write_text(eval_report, j.dump(2) + "\n");
      if (!eval_roc.empty()) write_with(eval_roc, [&](std::ostream& os) { write_roc_csv(os, roc_auc(scores, labels)); });
    } else if (predict_cmd->parsed()) {
      const auto model = load_checkpoint(predict_model);
      auto emit = [&](const WebPageSample& s) {
        const auto p = model.predict(s, threshold);
        nlohmann::ordered_json j{{"id", s.id}, {"label", label_name(p.label)}, {"score", p.score}};
        out << j.dump() << '\n';
      };
      if (!predict_manifest.empty()) {
        for (const auto& s : load_samples(predict_manifest, err, verbose)) emit(s);
      } else {
        if (predict_url.empty()) throw ConfigError("give --url (with optional --html-file) or --manifest");
        WebPageSample s;
        s.id = "input";
        s.raw_url = predict_url;
        s.normalized_url = normalize_url(predict_url);
        if (!predict_html_file.empty())
          s.html = utf8::sanitize(webphish::detail::read_file_bytes(predict_html_file));
        emit(s);
      }
    } else if (finetune_cmd->parsed()) {
      const auto tcfg = ft_flags.build(seed);
      if (tcfg.early_stopping && ft_val.empty())
        throw ConfigError("--val is required unless --no-early-stopping is given");
      const auto donor = load_checkpoint(donor_path);
      const auto train_set = load_samples(ft_manifest, err, verbose);
      const auto val_set = ft_val.empty() ? std::vector<WebPageSample>{} : load_samples(ft_val, err, verbose);
      const auto tuned = fine_tune(donor, tcfg, train_set, val_set, epoch_logger);
      save_checkpoint(tuned.model, ft_out);
      if (!ft_history.empty()) write_text(ft_history, tuned.history.to_csv());
      out << tuned.history.to_csv();
    } else if (features_cmd->parsed()) {
      const auto words = words_path.empty() ? MisleadingWords::defaults() : MisleadingWords::load(words_path);
      const auto table = extract_feature_table(load_samples(features_manifest, err, verbose), words);
      write_with(features_out, [&](std::ostream& os) { write_feature_csv(os, table); });
      out << "rows: " << table.rows.size() << '\n';
    } else if (baseline_cmd->parsed()) {
      forest.seed = seed;
      const auto train_t = read_table(baseline_train);
      const auto test_t = read_table(baseline_test);
      if (train_t.columns != test_t.columns) throw DataError("train and test CSVs have different columns");
      std::vector<double> scores;
      nlohmann::ordered_json j;
      j["method"] = method;
      if (method == "rf") {
        const auto model = train_random_forest(train_t.rows, train_t.labels, forest);
        for (const auto& r : test_t.rows) scores.push_back(model.score(r));
        const auto imp = feature_importance(model);
        if (!importance_out.empty()) {
          std::vector<std::string_view> names(train_t.columns.begin(), train_t.columns.end());
          write_with(importance_out, [&](std::ostream& os) { write_importance_csv(os, imp, names); });
        }
      } else {
        if (!importance_out.empty()) throw ConfigError("--importance applies to --method rf only");
        const auto scaler = fit_scaler(train_t.rows);
        const auto model = train_logreg(scaler.apply(train_t.rows), train_t.labels, logreg);
        for (const auto& r : test_t.rows) scores.push_back(model.score(scaler.apply(r)));
        j["nonzero_weights"] = std::count_if(model.weights.begin(), model.weights.end(), [](double w) { return w != 0.0; });
      }
      j["test"] = evaluation_json(scores, test_t.labels, 0.5);
      if (baseline_report.empty())
        out << j.dump(2) << '\n';
      else
        write_text(baseline_report, j.dump(2) + "\n");
    } else if (project_cmd->parsed()) {
      tsne.seed = seed;
      if (project_input.empty() == project_model.empty())
        throw ConfigError("give exactly one of --input or --model/--manifest");
      LabeledTable table;
      if (!project_input.empty()) {
        table = read_table(project_input);
      } else {
        if (project_manifest.empty()) throw ConfigError("--model needs --manifest");
        const auto model = load_checkpoint(project_model);
        table = concat_table(model, load_samples(project_manifest, err, verbose));
        if (!concat_out.empty()) write_with(concat_out, [&](std::ostream& os) { write_labeled_csv(os, table); });
      }
      std::vector<Point2> coords;
      if (project_method == "pca") {
        coords = pca_2d(table.rows);
      } else {
        auto proj = tsne_2d(table.rows, tsne);
        if (verbose) err << "final KL " << proj.kl_history.back() << '\n';
        coords = std::move(proj.coordinates);
      }
      write_with(project_out, [&](std::ostream& os) { write_projection_csv(os, table.ids, table.labels, coords); });
      out << "rows: " << coords.size() << '\n';
    } else if (synth_cmd->parsed()) {
      synth.seed = seed;
      synth.profile = profile == "shifted" ? SyntheticProfile::shifted : SyntheticProfile::primary;
      const auto samples = generate_synthetic(synth);
      write_manifest(samples, synth_out);
      out << "samples: " << samples.size() << '\n';
    }
  } catch (const ConfigError& e) {
    err << "error: usage: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "error: data: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}

}  // namespace webphish::cli
