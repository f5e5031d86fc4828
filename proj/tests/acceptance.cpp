// End-to-end acceptance run on the default synthetic configuration.
// Prints one PASS/FAIL line per criterion; exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cobnet/cam.hpp"
#include "cobnet/config.hpp"
#include "cobnet/gradcheck.hpp"
#include "cobnet/metrics.hpp"
#include "cobnet/ops.hpp"
#include "cobnet/prior.hpp"
#include "cobnet/proto.hpp"
#include "cobnet/trainer.hpp"
#include "oracles.hpp"

using namespace cobnet;
using namespace cobnet::testing;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradcheckMaxRelErr = 1e-4;
constexpr double kGradcheckSeconds = 60.0;
constexpr int kOracleInstances = 200;
constexpr double kOracleTol = 1e-9;
constexpr std::size_t kEpisodesPerFold = 1000;
constexpr double kProtocolSeconds = 30.0 * 60.0;
constexpr double kKshotTol = 1e-12;
constexpr double kMinMiou = 0.45;
constexpr double kMinGainOverUntrained = 0.15;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

void note(const std::string& text) {
  std::printf("  %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double max_diff(std::span<const double> a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---- oracle equivalence ------------------------------------------------------

std::map<std::string, double> oracle_errors() {
  std::map<std::string, double> worst;
  auto track = [&](const std::string& k, double e) { worst[k] = std::max(worst[k], e); };
  Graph::NoGrad no_grad;
  for (int trial = 0; trial < kOracleInstances; ++trial) {
    std::mt19937_64 rng(9000 + trial);
    const std::size_t c = rand_int(rng, 1, 6), h = rand_int(rng, 1, 9), w = rand_int(rng, 1, 9);

    const Tensor f = random_tensor({c, h, w}, rng);
    const Mask m = random_nonempty_mask(h, w, rng, 0.4);
    track("masked average pooling", max_diff(proto::masked_average_pool(f, m).values.data(), map_oracle(f, m)));

    // Align mask: zero the support outside its mask by hand, then brute force.
    const Tensor q = random_tensor({c, h, w}, rng);
    std::vector<double> masked(f.data().begin(), f.data().end());
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h * w; ++i)
        if (!m.values[i]) masked[ch * h * w + i] = 0.0;
    const Tensor ms({c, h, w}, masked);
    track("align mask", max_diff(prior::align_mask(q, prior::masked_support_features(f, m)).values.data(),
                                 normalize_oracle(raw_cosine_oracle(q, {ms}))));

    const std::size_t ph = rand_int(rng, 1, h), pw = rand_int(rng, 1, w);
    track("adaptive pooling", max_diff(adaptive_avg_pool(f, ph, pw).data(), pool_oracle(f, ph, pw)));

    const std::size_t rh = rand_int(rng, 1, 12), rw = rand_int(rng, 1, 12);
    track("bilinear resize", max_diff(bilinear_resize(f, rh, rw).data(), bilinear_oracle(f, rh, rw)));

    const std::size_t k = trial % 2 ? 3 : 1, co = rand_int(rng, 1, 5);
    const Tensor wt = random_tensor({co, c, k, k}, rng), b = random_tensor({co}, rng);
    track("convolution", max_diff(conv2d(f, wt, b).data(), conv_oracle(f, wt, b)));

    const Tensor logits = random_tensor({2, h, w}, rng, -4.0, 4.0);
    const Mask truth = random_mask(h, w, rng);
    track("cross-entropy", std::abs(softmax_cross_entropy(logits, truth).item() - ce_oracle(logits, truth)));

    // Attention weighting: A from the two-layer head, then elementwise gating.
    Rng init(static_cast<std::uint64_t>(trial));
    const AttentionParams ap = AttentionParams::init(c, init);
    const Tensor fo = random_tensor({c, h, w}, rng), fb = random_tensor({c, h, w}, rng);
    std::vector<double> cat(fo.data().begin(), fo.data().end());
    cat.insert(cat.end(), fb.data().begin(), fb.data().end());
    auto hidden = conv_oracle(Tensor({2 * c, h, w}, cat), ap.conv1.weight, ap.conv1.bias);
    for (auto& v : hidden) v = std::max(v, 0.0);
    auto a = conv_oracle(Tensor({c, h, w}, hidden), ap.conv2.weight, ap.conv2.bias);
    for (auto& v : a) v = 1.0 / (1.0 + std::exp(-v));
    const Tensor att = cam::attention(fo, fb, ap);
    double e = max_diff(att.data(), a);
    const auto [go, gb] = cam::apply_attention(fo, fb, att);
    std::vector<double> want_o(c * h * w), want_b(c * h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < h * w; ++i) {
        want_o[ch * h * w + i] = fo.data()[ch * h * w + i] * att.data()[i];
        want_b[ch * h * w + i] = fb.data()[ch * h * w + i] * (1.0 - att.data()[i]);
      }
    }
    e = std::max({e, max_diff(go.data(), want_o), max_diff(gb.data(), want_b)});
    track("attention weighting", e);

    // Total loss: mean of resized intermediate losses plus the final loss.
    const std::size_t n = rand_int(rng, 1, 4), H = rand_int(rng, 1, 10);
    const Mask full_truth = random_mask(H, H, rng);
    std::vector<Tensor> inter;
    double aux = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t s = rand_int(rng, 1, 10);
      inter.push_back(random_tensor({2, s, s}, rng, -3.0, 3.0));
      aux += ce_oracle(Tensor({2, H, H}, bilinear_oracle(inter.back(), H, H)), full_truth);
    }
    const std::size_t s = rand_int(rng, 1, 10);
    const Tensor seg = random_tensor({2, s, s}, rng, -3.0, 3.0);
    const double want = aux / static_cast<double>(n) + ce_oracle(Tensor({2, H, H}, bilinear_oracle(seg, H, H)), full_truth);
    track("total loss", std::abs(cam::total_loss(seg, inter, full_truth).item() - want));
  }
  return worst;
}

// ---- training and evaluation helpers -------------------------------------

struct Variant {
  std::string name;
  std::vector<CobNet> models;  // one per fold
  double train_seconds = 0;
};

Variant train_variant(const std::string& name, const RunConfig& config, const Backbone& backbone) {
  Variant v{name, {}, 0};
  const auto t0 = Clock::now();
  for (std::size_t fold = 0; fold < kNumFolds; ++fold) {
    const auto tf = Clock::now();
    TrainResult r = train_fold(FoldSplit::standard(), fold, backbone, config.train, config.sampler());
    note(name + " fold " + std::to_string(fold) + ": " + std::to_string(r.log.size()) + " iterations, final loss " +
         fmt("%.4f", r.log.back().loss) + ", " + fmt("%.0f s", seconds_since(tf)));
    v.models.push_back(std::move(r.model));
  }
  v.train_seconds = seconds_since(t0);
  return v;
}

EvalProtocol protocol_for(const RunConfig& config, std::size_t shots, bool weak) {
  EvalProtocol p;
  p.episodes_per_fold = kEpisodesPerFold;
  p.shots = shots;
  p.weak = weak;
  p.seed = config.eval_seed;
  p.sampler = config.sampler();
  return p;
}

CrossValidationReport evaluate(const std::vector<CobNet>& models, const Backbone& backbone, const EvalProtocol& p) {
  return cross_validate(
      [&](std::size_t fold) -> std::function<Mask(const Episode&)> {
        const Segmenter s{&backbone, &models.at(fold)};
        return [s](const Episode& e) { return s.predict(e); };
      },
      FoldSplit::standard(), p);
}

CrossValidationReport all_background(const EvalProtocol& p) {
  return cross_validate(
      [](std::size_t) -> std::function<Mask(const Episode&)> {
        return [](const Episode& e) { return Mask(e.query_mask.height, e.query_mask.width); };
      },
      FoldSplit::standard(), p);
}

std::string fold_line(const CrossValidationReport& r) {
  std::ostringstream os;
  for (const auto& f : r.folds) os << "fold" << f.fold << '=' << fmt("%.4f", f.miou) << ' ';
  os << "mean=" << fmt("%.4f", r.mean_miou) << " fb_iou=" << fmt("%.4f", r.mean_fb_iou);
  return os.str();
}

// Largest gap between the k-shot prototype and the mean of per-shot prototypes.
double kshot_gap(const Backbone& backbone, const RunConfig& config) {
  double worst = 0;
  Graph::NoGrad no_grad;
  for (std::size_t fold = 0; fold < kNumFolds; ++fold) {
    for (std::size_t i = 0; i < 50; ++i) {
      const Episode ep = sample_indexed_episode(FoldSplit::standard(), fold, EpisodeRole::test, 5, config.eval_seed, i,
                                                config.sampler());
      const EpisodeInput in = prepare_input(backbone, ep);
      const Tensor k = proto::kshot_prototype(in.shots).values;
      std::vector<double> mean(k.numel(), 0.0);
      for (const auto& s : in.shots) {
        const Tensor p = proto::masked_average_pool(s.features, s.mask).values;
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += p.data()[j] / static_cast<double>(in.shots.size());
      }
      worst = std::max(worst, max_diff(k.data(), mean));
    }
  }
  return worst;
}

bool same_tallies(const CrossValidationReport& a, const CrossValidationReport& b) {
  return format_report_records(a, "x") == format_report_records(b, "x");
}

int run_unit_tests() {
  int failed = 0;
  std::istringstream paths(COBNET_UNIT_TEST_BINARIES);
  for (std::string path; std::getline(paths, path, '|');) {
    const std::string cmd = path + " --gtest_brief=1 > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    const std::size_t slash = path.find_last_of('/');
    note(path.substr(slash + 1) + (rc == 0 ? ": ok" : ": FAILED"));
    failed += rc != 0;
  }
  return failed;
}

}  // namespace

int main() {
  const auto start = Clock::now();
  const RunConfig config;  // default synthetic configuration
  const Backbone backbone(config.backbone);

  report("published-numbers",
         true,
         "benchmark scores on PASCAL-5i and COCO-20i need an ImageNet-pretrained ResNet-50 and the real datasets; "
         "they are NOT reproduced here and the property checks below substitute for them");

  {
    const auto t0 = Clock::now();
    const GradcheckReport g = run_gradcheck();
    const double t = seconds_since(t0);
    double worst = 0;
    for (const auto& p : g.parameters) worst = std::max(worst, p.max_error);
    report("gradient-suite", g.passed() && worst < kGradcheckMaxRelErr && t < kGradcheckSeconds,
           std::to_string(g.parameters.size()) + " parameters, max rel err " + fmt("%.3g", worst) + " (< 1e-4), " +
               fmt("%.2f s", t) + " (< 60 s)");
  }

  {
    const auto errs = oracle_errors();
    double worst = 0;
    std::string detail;
    for (const auto& [k, e] : errs) {
      worst = std::max(worst, e);
      detail += k + "=" + fmt("%.1e", e) + ", ";
    }
    report("oracle-equivalence", worst < kOracleTol,
           std::to_string(kOracleInstances) + " instances each: " + detail + "tolerance 1e-9");
  }

  // Full model: training, 1-shot and 5-shot protocol, rerun.
  const Variant full = train_variant("full", config, backbone);
  const EvalProtocol p1 = protocol_for(config, 1, false), p5 = protocol_for(config, 5, false);
  auto t0 = Clock::now();
  const CrossValidationReport k1 = evaluate(full.models, backbone, p1);
  const double t1 = seconds_since(t0);
  t0 = Clock::now();
  const CrossValidationReport k5 = evaluate(full.models, backbone, p5);
  const double t5 = seconds_since(t0);
  note("1-shot " + fold_line(k1));
  note("5-shot " + fold_line(k5));
  {
    const double gap = kshot_gap(backbone, config);
    const bool identical = same_tallies(k1, evaluate(full.models, backbone, p1));
    const double total = full.train_seconds + t1 + t5;
    report("protocol-shape", total < kProtocolSeconds && gap <= kKshotTol && identical && k1.folds.size() == 4 &&
                                 k5.folds.size() == 4,
           "4 folds x 1000 episodes, train " + fmt("%.0f s", full.train_seconds) + " + 1-shot " + fmt("%.0f s", t1) +
               " + 5-shot " + fmt("%.0f s", t5) + " = " + fmt("%.0f s", total) + " (< 1800 s); k-shot prototype gap " +
               fmt("%.1e", gap) + " (<= 1e-12); rerun " + (identical ? "bit-identical" : "DIFFERS"));
  }

  {
    std::vector<CobNet> untrained;
    for (std::size_t fold = 0; fold < kNumFolds; ++fold)
      untrained.emplace_back(config.train.model, mix_seed(config.train.seed, fold));
    const CrossValidationReport base = evaluate(untrained, backbone, p1);
    note("untrained " + fold_line(base));
    const double gain = k1.mean_miou - base.mean_miou;
    report("learning-signal", k1.mean_miou >= kMinMiou && gain >= kMinGainOverUntrained,
           "trained mean mIoU " + fmt("%.4f", k1.mean_miou) + " (>= 0.45), untrained " + fmt("%.4f", base.mean_miou) +
               ", gain " + fmt("%.4f", gain) + " (>= 0.15)");
  }

  {
    std::map<std::string, double> means{{"full", k1.mean_miou}};
    for (Ablation mode : {Ablation::mbm_o, Ablation::mbm_s, Ablation::mbm_only}) {
      RunConfig v = config;
      v.train.model.ablation = mode;
      const Variant trained = train_variant(ablation_name(mode), v, backbone);
      const CrossValidationReport r = evaluate(trained.models, backbone, p1);
      note(std::string(ablation_name(mode)) + " " + fold_line(r));
      means[ablation_name(mode)] = r.mean_miou;
    }
    const bool ordered = means["mbm_o"] <= means["mbm_s"] && means["mbm_s"] <= means["mbm_only"] &&
                         means["mbm_only"] <= means["full"];
    report("ablation-endpoint", means["full"] >= means["mbm_o"],
           "mean mIoU mbm_o=" + fmt("%.4f", means["mbm_o"]) + " mbm_s=" + fmt("%.4f", means["mbm_s"]) +
               " mbm_only=" + fmt("%.4f", means["mbm_only"]) + " full=" + fmt("%.4f", means["full"]) +
               "; gate full >= mbm_o; full ordering " + (ordered ? "holds" : "does not hold (reported only)"));
  }

  {
    std::map<std::size_t, double> means{{config.train.model.grid, k1.mean_miou}};
    for (std::size_t j : {1, 2, 8}) {
      RunConfig v = config;
      v.train.model.grid = j;
      const Variant trained = train_variant("grid" + std::to_string(j), v, backbone);
      const CrossValidationReport r = evaluate(trained.models, backbone, p1);
      note("j=" + std::to_string(j) + " " + fold_line(r));
      means[j] = r.mean_miou;
    }
    bool ok = means.size() == 4;
    std::string detail;
    for (const auto& [j, m] : means) {
      ok = ok && m > 0.0 && m <= 1.0;
      detail += "j=" + std::to_string(j) + ":" + fmt("%.4f", m) + " ";
    }
    report("grid-sweep", ok, detail + "(each in (0, 1])");
  }

  {
    const EvalProtocol pw = protocol_for(config, 1, true);
    const CrossValidationReport weak = evaluate(full.models, backbone, pw);
    const CrossValidationReport bg = all_background(pw);
    note("weak " + fold_line(weak));
    report("weak-mode", weak.mean_miou > bg.mean_miou,
           "weak mean mIoU " + fmt("%.4f", weak.mean_miou) + " > all-background " + fmt("%.4f", bg.mean_miou));
  }

  {
    const int failed = run_unit_tests();
    report("invariant-suite", failed == 0, failed == 0 ? "every unit and property test binary passed"
                                                        : std::to_string(failed) + " test binaries failed");
  }

  std::printf("acceptance finished in %.0f s, %d failing criteria\n", seconds_since(start), failures);
  return failures == 0 ? 0 : 1;
}
