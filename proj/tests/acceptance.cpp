// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "golden_features.hpp"
#include "gradcheck.hpp"
#include "stub_server.hpp"
#include "test_util.hpp"
#include "webphish/baselines.hpp"
#include "webphish/checkpoint.hpp"
#include "webphish/features.hpp"
#include "webphish/fetcher.hpp"
#include "webphish/metrics.hpp"
#include "webphish/projection.hpp"
#include "webphish/synthetic.hpp"
#include "webphish/tokenizer.hpp"
#include "webphish/training.hpp"

using namespace webphish;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [failed]");
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

struct Scored {
  double accuracy = 0.0;
  double auc = 0.0;
};

Scored score_on(const Classifier& m, const std::vector<WebPageSample>& test) {
  const auto scores = m.scores(test);
  std::vector<int> labels, preds;
  for (std::size_t i = 0; i < test.size(); ++i) {
    labels.push_back(label_value(test[i].label));
    preds.push_back(label_value(decide(scores[i])));
  }
  return {*report(confusion(labels, preds)).accuracy, roc_auc(scores, labels).auc};
}

DatasetSplit corpus(SyntheticConfig sc) { return split(generate_synthetic(sc), sc.seed); }

FitResult train_default(Variant v, const DatasetSplit& s, std::uint64_t seed) {
  ModelConfig mc;
  mc.variant = v;
  TrainConfig tc;
  tc.seed = seed;
  return fit(mc, tc, s.train, s.validation);
}

// Shared between criteria 3, 4, 9 and 10.
const FitResult* g_full = nullptr;

Outcome gradient_check_criterion() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  bool structural = true;
  const int configs = 24;
  for (int i = 0; i < configs; ++i) {
    const auto r = webphish::testing::gradient_check(webphish::testing::random_micro_case(1000 + i));
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    structural &= r.frozen_ok && r.padding_ok && r.nonzero > 0;
  }
  const double secs = seconds_since(t0);
  o.require(true, std::to_string(configs) + " configs, " + std::to_string(checked) + " parameters");
  o.require(worst < 1e-4, "max relative error " + sci(worst));
  o.require(structural, "frozen and padding gradients zero");
  o.require(secs < 60.0, fmt(secs, 1) + " s");
  return o;
}

Outcome table_criterion() {
  Outcome o;
  const auto r = report(ConfusionMatrix{204, 16, 2394, 26});
  o.require(std::abs(*r.accuracy - 0.9841) <= 1e-4, "accuracy " + fmt(*r.accuracy, 6));
  return o;
}

Outcome synthetic_criterion() {
  Outcome o;
  const auto s = corpus({.count = 1100, .seed = 101});
  const auto t0 = Clock::now();
  static const FitResult full = train_default(Variant::full, s, 7);
  const double secs = seconds_since(t0);
  g_full = &full;
  const auto f = score_on(full.model, s.test);
  o.require(full.history.epochs.size() <= 20, "full: " + std::to_string(full.history.epochs.size()) + " epochs");
  o.require(f.accuracy >= 0.95, "accuracy " + fmt(f.accuracy));
  o.require(f.auc >= 0.98, "AUC " + fmt(f.auc));
  o.require(secs < 900.0, fmt(secs, 1) + " s");

  // Each single-channel variant sees signal only in its own channel.
  const auto url_corpus = corpus({.count = 1100, .html_signal_rate = 0.0, .seed = 102});
  const auto url = score_on(train_default(Variant::url_only, url_corpus, 8).model, url_corpus.test);
  o.require(url.accuracy >= 0.90, "url_only accuracy " + fmt(url.accuracy) + " AUC " + fmt(url.auc));
  const auto html_corpus = corpus({.count = 1100, .url_signal_rate = 0.0, .seed = 103});
  const auto html = score_on(train_default(Variant::html_only, html_corpus, 9).model, html_corpus.test);
  o.require(html.accuracy >= 0.90, "html_only accuracy " + fmt(html.accuracy) + " AUC " + fmt(html.auc));
  return o;
}

Outcome finetune_criterion() {
  Outcome o;
  if (!g_full) throw Error("internal", "donor model unavailable");
  const auto& donor = g_full->model;
  const auto s = corpus({.count = 1100, .profile = SyntheticProfile::shifted, .seed = 104});

  TrainConfig tc;
  tc.seed = 11;
  const auto transferred = transfer_params(donor, tc.seed);
  const auto start = transferred.named_tensors();
  const auto ref = donor.params.named_tensors();
  bool equal = start.size() == ref.size();
  for (std::size_t i = 0; equal && i < start.size(); ++i)
    if (!start[i].name.starts_with("output.")) equal = *start[i].tensor == *ref[i].tensor;
  o.require(equal, "non-output tensors bitwise equal to donor");

  const auto before = score_on(donor, s.test);
  const auto tuned = fine_tune(donor, tc, s.train, s.validation);
  const auto after = score_on(tuned.model, s.test);
  o.require(after.accuracy >= 0.95,
            "shifted accuracy " + fmt(before.accuracy) + " before, " + fmt(after.accuracy) + " after");
  return o;
}

Outcome golden_criterion() {
  Outcome o;
  const auto n = webphish::testing::golden().size();
  const auto ok = webphish::testing::golden_matches();
  o.require(n >= 15, std::to_string(n) + " pairs");
  o.require(ok == n, std::to_string(ok) + " exact matches");
  return o;
}

template <typename Model>
double held_out_accuracy(const Model& m, const Matrix& rows, const std::vector<int>& labels) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) ok += label_value(m.predict(rows[i]).label) == labels[i];
  return static_cast<double>(ok) / static_cast<double>(rows.size());
}

Outcome baselines_criterion() {
  Outcome o;
  const auto s = corpus({.count = 1100, .seed = 105});
  const auto train = to_labeled_table(extract_feature_table(s.train));
  const auto test = to_labeled_table(extract_feature_table(s.test));

  const auto rf = train_random_forest(train.rows, train.labels, {.trees = 70, .seed = 3});
  o.require(rf.trees.size() == 70, "70 trees");
  o.require(held_out_accuracy(rf, test.rows, test.labels) >= 0.95,
            "RF accuracy " + fmt(held_out_accuracy(rf, test.rows, test.labels)));

  const auto scaler = fit_scaler(train.rows);
  const auto lr = train_logreg(scaler.apply(train.rows), train.labels);
  const double lr_acc = held_out_accuracy(lr, scaler.apply(test.rows), test.labels);
  o.require(lr_acc >= 0.95, "L1 logistic accuracy " + fmt(lr_acc));

  // Feature 0 alone decides the label; the other 30 columns are noise.
  Rng rng(17);
  Matrix rows;
  std::vector<int> labels;
  for (int i = 0; i < 400; ++i) {
    Row r(31);
    for (auto& v : r) v = standard_normal(rng);
    const int y = static_cast<int>(uniform_index(rng, 2));
    r[0] = (y ? 1.0 : -1.0) + 0.3 * standard_normal(rng);
    rows.push_back(r);
    labels.push_back(y);
  }
  const auto planted = train_random_forest(rows, labels, {.seed = 5});
  const auto imp = feature_importance(planted);
  o.require(std::max_element(imp.begin(), imp.end()) == imp.begin(), "planted feature ranked first");

  const auto again = train_random_forest(train.rows, train.labels, {.trees = 70, .seed = 3});
  bool same = feature_importance(again) == feature_importance(rf);
  for (const auto& r : test.rows) same &= again.score(r) == rf.score(r);
  const auto lr_again = train_logreg(scaler.apply(train.rows), train.labels);
  same &= lr_again.weights == lr.weights && lr_again.bias == lr.bias;
  o.require(same, "same-seed runs bit-identical");
  return o;
}

double mann_whitney(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

Outcome auc_criterion() {
  Outcome o;
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 100);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(uniform_index(rng, 5)) : uniform01(rng);
      y[i] = static_cast<int>(uniform_index(rng, 2));
    }
    y[0] = 1;
    y[1] = 0;
    worst = std::max(worst, std::abs(roc_auc(s, y).auc - mann_whitney(s, y)));
  }
  o.require(worst <= 1e-9, "1000 sets, max |curve - Mann-Whitney| " + sci(worst));
  const double perfect = roc_auc(std::vector<double>{0.9, 0.7, 0.3, 0.1}, std::vector<int>{1, 1, 0, 0}).auc;
  o.require(perfect == 1.0, "perfect separation " + fmt(perfect));
  const double tied = roc_auc(std::vector<double>(6, 0.4), std::vector<int>{1, 0, 0, 1, 0, 1}).auc;
  o.require(tied == 0.5, "all tied " + fmt(tied));
  return o;
}

Outcome tsne_criterion() {
  Outcome o;
  Rng rng(3);
  Matrix x;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 100; ++i) {
      Row r(32);
      for (auto& v : r) v = standard_normal(rng);
      r[0] += c * 10.0;
      x.push_back(r);
    }
  const auto t0 = Clock::now();
  const auto proj = tsne_2d(x, {.seed = 5});
  const double secs = seconds_since(t0);
  const auto& y = proj.coordinates;

  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double min_inter = 1e300, max_intra = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (j == i) continue;
      const double d = std::hypot(y[i][0] - y[j][0], y[i][1] - y[j][1]);
      if ((i < 100) == (j < 100))
        max_intra = std::max(max_intra, d);
      else
        min_inter = std::min(min_inter, d);
    }
    ok += min_inter > max_intra;
  }
  o.require(ok >= 190, std::to_string(ok) + "/200 points separated");

  double worst = 0.0;
  for (double p : proj.perplexities) worst = std::max(worst, std::abs(std::log(p) - std::log(30.0)));
  o.require(worst <= 1e-3, "perplexity log error " + sci(worst));

  bool kl_ok = proj.kl_history.size() == 1000;
  if (kl_ok) {
    double early = 0.0, late = 0.0;
    for (std::size_t i = 299; i < 400; ++i) early += proj.kl_history[i];
    for (std::size_t i = 899; i < 1000; ++i) late += proj.kl_history[i];
    kl_ok = late <= early;
    o.require(kl_ok, "mean KL " + fmt(early / 101.0) + " -> " + fmt(late / 101.0));
  } else {
    o.require(false, "KL history length");
  }
  o.require(secs < 120.0, fmt(secs, 2) + " s");
  return o;
}

Outcome roundtrip_criterion() {
  Outcome o;
  if (!g_full) throw Error("internal", "trained model unavailable");
  const auto& model = g_full->model;
  webphish::testing::TempDir dir;
  save_checkpoint(model, dir.path / "m.ckpt");
  const auto back = load_checkpoint(dir.path / "m.ckpt");
  bool exact = back.params == model.params && back.config == model.config &&
               serialize_checkpoint(back) == serialize_checkpoint(model);
  for (const auto& s : generate_synthetic({.count = 100, .seed = 106})) exact &= back.score(s) == model.score(s);
  o.require(exact, "checkpoint bit-exact on 100 samples");

  Rng rng(31);
  const auto vocab = build_vocab(std::vector<std::string>{"abcxyz/.:-_0123456789<>\"= \xC3\xA9"});
  std::size_t bad = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string text(uniform_index(rng, 150), '\0');
    for (auto& c : text) c = static_cast<char>(rng() & 0xFF);
    const std::size_t max_len = 1 + uniform_index(rng, 120);
    const auto ids = encode(text, vocab, max_len);
    auto wide = encode(text, vocab, max_len + 40);
    bool good = ids.size() == max_len && wide.size() == max_len + 40;
    for (auto id : ids) good &= static_cast<std::size_t>(id) < vocab.size();
    // Extending the length only appends padding once the text fits.
    good &= std::equal(ids.begin(), ids.end(), wide.begin());
    if (ids.back() == kPaddingId)
      good &= std::all_of(wide.begin() + static_cast<std::ptrdiff_t>(max_len), wide.end(),
                          [](TokenId t) { return t == kPaddingId; });
    bad += !good;
  }
  o.require(bad == 0, "10000 fuzzed encodes, " + std::to_string(bad) + " violations");

  const std::string alphabet = "<>!-/='\" \tabcdefhimnoprstuvABCS?\n";
  std::size_t total = 0, events = 0;
  while (total < 1'000'000) {
    std::string s(1 + uniform_index(rng, 400), '\0');
    for (auto& c : s)
      c = uniform01(rng) < 0.7 ? alphabet[uniform_index(rng, alphabet.size())] : static_cast<char>(rng() & 0xFF);
    total += s.size();
    events += scan_tags(s).size();
    (void)extract_html_features(s, "a.com");
  }
  o.require(true, "tag scanner survived " + std::to_string(total) + " bytes, " + std::to_string(events) + " tags");
  return o;
}

Outcome latency_criterion() {
  Outcome o;
  if (!g_full) throw Error("internal", "trained model unavailable");
  const auto& model = g_full->model;
  o.require(model.config == ModelConfig{}, "default config");
  const auto samples = generate_synthetic({.count = 1100, .seed = 108});
  std::vector<double> ms;
  ms.reserve(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto t0 = Clock::now();
    (void)model.predict(samples[i]);
    ms.push_back(1000.0 * seconds_since(t0));
  }
  std::nth_element(ms.begin(), ms.begin() + 500, ms.end());
  o.require(ms[500] < 10.0, "median " + fmt(ms[500], 3) + " ms");
  return o;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

Outcome fetcher_criterion() {
  Outcome o;
  webphish::testing::StubServer stub;
  webphish::testing::TempDir dir;
  CorpusOptions opt;
  opt.rate_limit = 0;
  opt.per_host_interval = 0;
  opt.timeout_seconds = 0.5;
  const std::vector<std::string> urls{stub.url("/missing"), stub.url("/ok"), stub.url("/slow"),
                                      stub.url("/hop/2"), stub.url("/image")};
  const auto report = build_corpus(urls, Label::phishing, dir.path, opt);

  auto record = [&](int n, const std::string& url, const std::string& final_url) {
    char id[32];
    std::snprintf(id, sizeof id, "phishing_%06d", n);
    return std::string(R"({"id":")") + id + R"(","url":")" + url + R"(","final_url":")" + final_url +
           R"(","label":"phishing","html_path":"html/)" + id + R"(.html","http_status":200})";
  };
  const std::vector<std::string> expected{record(1, stub.url("/ok"), stub.url("/ok")),
                                          record(2, stub.url("/hop/2"), stub.url("/landing"))};
  o.require(read_lines(dir.path / "manifest.jsonl") == expected, "manifest exact");

  nlohmann::ordered_json errors;
  for (auto e : kFetchErrors) errors[std::string(fetch_error_name(e))] = 0;
  errors["http_error"] = 1;
  errors["read_timeout"] = 1;
  errors["non_html_content"] = 1;
  const auto summary = report.summary_json();
  bool ok = summary["total"] == 5 && summary["succeeded"] == 2 && summary["errors"] == errors &&
            summary["failures"].size() == 3;
  if (ok) {
    const auto& f = summary["failures"];
    ok = f[0]["url"] == stub.url("/missing") && f[0]["error"] == "http_error" && f[0]["http_status"] == 404 &&
         f[1]["url"] == stub.url("/slow") && f[1]["error"] == "read_timeout" && f[2]["url"] == stub.url("/image") &&
         f[2]["error"] == "non_html_content";
  }
  o.require(ok, "report counts and failures in input order");
  std::ifstream in(dir.path / "fetch_report.json");
  const auto written = nlohmann::json::parse(in);
  o.require(written.contains("results") && written["results"].size() == 5, "report file lists every URL");
  bool files = true;
  for (const char* id : {"phishing_000001", "phishing_000002"})
    files &= std::filesystem::exists(dir.path / "html" / (std::string(id) + ".html"));
  o.require(files, "html files written");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_check_criterion}, {2, table_criterion},    {3, synthetic_criterion},
      {4, finetune_criterion},       {5, golden_criterion},   {6, baselines_criterion},
      {7, auc_criterion},            {8, tsne_criterion},     {9, roundtrip_criterion},
      {10, latency_criterion},       {11, fetcher_criterion}};
  int failures = 0;
  for (const auto& [n, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s criterion %d: %s\n", o.pass ? "PASS" : "FAIL", n, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
