#include "cobnet/metrics.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>
#include <thread>

#include "cobnet/error.hpp"

namespace cobnet {

EpisodeCounts episode_counts(const Mask& prediction, const Mask& truth) {
  if (prediction.height != truth.height || prediction.width != truth.width) {
    throw DimensionError("prediction and truth masks differ in size");
  }
  EpisodeCounts c;
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const bool p = prediction.values[i] != 0, t = truth.values[i] != 0;
    c.intersection += p && t;
    c.union_ += p || t;
    c.bg_intersection += !p && !t;
    c.bg_union += !p || !t;
  }
  return c;
}

void ClassTally::add(std::size_t class_id, const EpisodeCounts& counts) {
  auto& t = per_class_[class_id];
  t.intersection += counts.intersection;
  t.union_ += counts.union_;
  foreground_.intersection += counts.intersection;
  foreground_.union_ += counts.union_;
  background_.intersection += counts.bg_intersection;
  background_.union_ += counts.bg_union;
  ++episodes_;
}

void ClassTally::merge(const ClassTally& other) {
  for (const auto& [id, t] : other.per_class_) {
    auto& mine = per_class_[id];
    mine.intersection += t.intersection;
    mine.union_ += t.union_;
  }
  foreground_.intersection += other.foreground_.intersection;
  foreground_.union_ += other.foreground_.union_;
  background_.intersection += other.background_.intersection;
  background_.union_ += other.background_.union_;
  episodes_ += other.episodes_;
}

namespace {
double ratio(const ClassTally::Totals& t) {
  return t.union_ == 0 ? 1.0 : static_cast<double>(t.intersection) / static_cast<double>(t.union_);
}
}  // namespace

double miou(const ClassTally& tally, std::vector<std::size_t>* skipped) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& [id, t] : tally.per_class()) {
    if (t.union_ == 0) {
      std::cerr << "warning: class " << id << " has zero union and is excluded from mIoU\n";
      if (skipped) skipped->push_back(id);
      continue;
    }
    acc += ratio(t);
    ++n;
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

double fb_iou(const ClassTally& tally) { return 0.5 * (ratio(tally.foreground()) + ratio(tally.background())); }

ClassTally evaluate_fold(const std::function<Mask(const Episode&)>& predictor, const FoldSplit& split,
                         std::size_t fold, const EvalProtocol& protocol) {
  const std::size_t n = protocol.episodes_per_fold;
  const std::size_t threads = std::max<std::size_t>(1, std::min(protocol.threads, n));
  std::vector<EpisodeCounts> counts(n);
  std::vector<std::size_t> classes(n);
  auto run = [&](std::size_t worker) {
    for (std::size_t i = worker; i < n; i += threads) {
      Episode ep = sample_indexed_episode(split, fold, EpisodeRole::test, protocol.shots, protocol.seed, i,
                                          protocol.sampler);
      if (protocol.weak) ep = make_weak(std::move(ep));
      counts[i] = episode_counts(predictor(ep), ep.query_mask);
      classes[i] = ep.class_id;
    }
  };
  if (threads == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run, t);
    for (auto& th : pool) th.join();
  }
  // merged in episode order regardless of thread count
  ClassTally tally;
  for (std::size_t i = 0; i < n; ++i) tally.add(classes[i], counts[i]);
  return tally;
}

CrossValidationReport cross_validate(const PredictorFactory& factory, const FoldSplit& split,
                                     const EvalProtocol& protocol) {
  CrossValidationReport report;
  for (std::size_t fold : protocol.folds) {
    auto predictor = factory(fold);
    if (!predictor) throw ConfigError("no trained weights for fold " + std::to_string(fold));
    const ClassTally tally = evaluate_fold(predictor, split, fold, protocol);
    report.folds.push_back({fold, miou(tally), fb_iou(tally), tally.episodes()});
  }
  if (!report.folds.empty()) {
    for (const auto& f : report.folds) {
      report.mean_miou += f.miou;
      report.mean_fb_iou += f.fb_iou;
    }
    report.mean_miou /= static_cast<double>(report.folds.size());
    report.mean_fb_iou /= static_cast<double>(report.folds.size());
  }
  return report;
}

std::string format_report_table(const CrossValidationReport& report, const std::string& title) {
  std::ostringstream os;
  char buf[128];
  os << title << '\n';
  os << "metric  ";
  for (const auto& f : report.folds) {
    std::snprintf(buf, sizeof buf, "  fold%zu", f.fold);
    os << buf;
  }
  os << "    mean\n";
  auto row = [&](const char* name, auto get, double mean) {
    os << name;
    for (const auto& f : report.folds) {
      std::snprintf(buf, sizeof buf, " %6.2f", 100.0 * get(f));
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "  %6.2f\n", 100.0 * mean);
    os << buf;
  };
  row("mIoU    ", [](const FoldReport& f) { return f.miou; }, report.mean_miou);
  row("FB-IoU  ", [](const FoldReport& f) { return f.fb_iou; }, report.mean_fb_iou);
  return os.str();
}

std::string format_report_records(const CrossValidationReport& report, const std::string& label) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& f : report.folds) {
    os << "record=fold label=" << label << " fold=" << f.fold << " episodes=" << f.episodes << " miou=" << f.miou
       << " fb_iou=" << f.fb_iou << '\n';
  }
  os << "record=mean label=" << label << " miou=" << report.mean_miou << " fb_iou=" << report.mean_fb_iou << '\n';
  return os.str();
}

}  // namespace cobnet
