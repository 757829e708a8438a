// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>

#include <spdlog/spdlog.h>

#include "bench_support.hpp"
#include "cmda/error.hpp"
#include "oracles.hpp"

using namespace cmda;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kVariants{"source_only", "pds", "ours", "proto", "neighbour", "uniform", "x100"};
constexpr int kSeeds = 3;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Mean nDCG / mAP per variant over training seeds 0..kSeeds-1, plus the seed-0 run.
struct Benchmark {
  std::map<std::string, std::pair<double, double>> mean;
  bench::SeedRun seed0;
  double seed0Seconds = 0.0;
};

Benchmark runBenchmark() {
  const SynthSpec spec;
  const auto synth = generateSynth(spec);
  Benchmark b;
  for (int s = 0; s < kSeeds; ++s) {
    auto cfg = RunConfig::benchProfile();
    cfg.train.seed = static_cast<std::uint64_t>(s);
    const auto t0 = std::chrono::steady_clock::now();
    auto run = bench::runSeed(synth, cfg, kVariants);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& [name, v] : run.variants) {
      std::printf("  seed %d %-12s nDCG %.4f mAP %.4f\n", s, name.c_str(), v.ndcg, v.map);
      b.mean[name].first += v.ndcg / kSeeds;
      b.mean[name].second += v.map / kSeeds;
    }
    if (s == 0) {
      b.seed0 = std::move(run);
      b.seed0Seconds = secs;
    }
  }
  for (const auto& [name, m] : b.mean) std::printf("  mean   %-12s nDCG %.4f mAP %.4f\n", name.c_str(), m.first, m.second);
  return b;
}

void criteria1to5(const Benchmark& b) {
  const auto& ours = b.mean.at("ours");
  const auto& so = b.mean.at("source_only");
  const double dn = ours.first - so.first, dm = ours.second - so.second;
  report(1, dn >= 0.03 && dm >= 0.02,
         fmt("ours - source-only: nDCG %+.4f (need >= 0.03), mAP %+.4f (need >= 0.02); seed-0 sweep %.0fs", dn, dm,
             b.seed0Seconds));

  bool ok2 = true;
  std::string d2;
  for (const char* v : {"proto", "neighbour", "uniform"}) {
    const double other = b.mean.at(v).first;
    ok2 = ok2 && ours.first >= other - 0.005;
    d2 += fmt("%s %.4f, ", v, other);
  }
  report(2, ok2, fmt("ours %.4f vs ", ours.first) + d2 + "tolerance 0.005");

  const double x100 = b.mean.at("x100").first;
  report(3, ours.first >= x100, fmt("x=60 nDCG %.4f vs x=100 nDCG %.4f", ours.first, x100));

  const auto& acc = b.seed0.variants.at("ours").labelAccuracy;
  double first = -1.0, last = -1.0;
  for (const auto& row : acc) {
    if (row.view != View::kAction) continue;
    if (row.epoch == 1) first = row.accuracy.selected;
    last = row.accuracy.selected;
  }
  report(4, first >= 0.0 && last - first >= 0.05,
         fmt("selected action pseudo-label accuracy %.3f -> %.3f (gain %+.3f, need >= 0.05)", first, last, last - first));

  bool ok5 = true;
  std::size_t rows = 0;
  for (const auto& row : b.seed0.variants.at("ours").diagnostics) {
    ok5 = ok5 && row.perPrototypeDiversity >= row.uniformDiversity;
    ++rows;
  }
  report(5, ok5 && rows > 0, fmt("per-prototype >= uniform diversity on %zu logged (epoch, view) rows", rows));
}

void criterion6() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& r : {oracle::checkEmbeddingNet(seed), oracle::checkModelLoss(seed, false),
                          oracle::checkModelLoss(seed, true)}) {
      worst = std::max(worst, r.maxRelError);
      checked += r.checked;
    }
  }
  report(6, worst < oracle::kFdTolerance,
         fmt("max relative FD error %.2e over %zu parameters, 10 seeds (need < 1e-4)", worst, checked));
}

void criterion7() {
  const auto r = oracle::checkMetrics(1000, 2024);
  const std::vector<double> ndcgCase{0.5, 1.0, 0.0}, apCase{1.0, 0.0, 1.0};
  const double n = queryNdcg(ndcgCase).value(), ap = averagePrecision(apCase).value();
  const bool hand = std::abs(n - 0.8597) < 1e-4 && std::abs(ap - 0.8333) < 1e-4;
  report(7, r.definednessAgrees && r.maxNdcgError < 1e-10 && r.maxApError < 1e-10 && hand,
         fmt("1000 rankings: max nDCG error %.1e, max AP error %.1e; hand nDCG %.4f, AP %.4f", r.maxNdcgError,
             r.maxApError, n, ap));
}

void criterion8() {
  double mean = 0.0, sd = 0.0, before = 1.0, after = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = oracle::checkPds(seed);
    mean = std::max(mean, p.maxAbsMean);
    sd = std::max(sd, p.maxStdError);
    const auto c = oracle::checkCoral(seed);
    before = std::min(before, c.before);
    after = std::max(after, c.after);
  }
  report(8, mean < 1e-10 && sd < 1e-10 && after < 0.05,
         fmt("PDS max |mean| %.1e, max |std-1| %.1e; CORAL covariance mismatch %.3f -> %.4f (n = 50 d)", mean, sd,
             before, after));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Scratch {
  fs::path root = fs::temp_directory_path() / "cmda_acceptance";
  Scratch() {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
};

// gen + pretrain + adapt + eval through the file formats, in its own directory.
nlohmann::json endToEnd(const fs::path& dir) {
  const SynthSpec spec;
  const auto files = writeSynth(generateSynth(spec), spec, dir / "data");
  auto cfg = RunConfig::benchProfile();
  cfg.paths = files.runPaths(dir / "run");
  const auto pre = runPretrain(cfg);
  const auto ada = runAdapt(cfg, pre);
  return runEval(cfg, ada, cfg.paths.outputDir / "report.json", cfg.paths.outputDir / "adapt_labels.csv");
}

void criterion9(const Scratch& s) {
  const auto a = endToEnd(s.root / "a");
  const auto b = endToEnd(s.root / "b");
  const std::string ra = slurp(s.root / "a" / "run" / "report.json");
  const std::string rb = slurp(s.root / "b" / "run" / "report.json");
  report(9, a == b && !ra.empty() && ra == rb,
         fmt("two independent runs: report nDCG %.6f vs %.6f, report files %s", a.at("ndcg").get<double>(),
             b.at("ndcg").get<double>(), ra == rb ? "byte-identical" : "differ"));
}

void criterion10(const Scratch& s) {
  const SynthSpec spec;
  const auto files = writeSynth(generateSynth(spec), spec, s.root / "guard");
  auto cfg = RunConfig::benchProfile();
  cfg.train.pretrainEpochs = 1;
  cfg.train.adaptEpochs = 1;
  cfg.paths = files.runPaths(s.root / "guard_run");
  const auto pre = runPretrain(cfg);

  auto refused = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const ProtocolError&) {
      return true;
    }
    return false;
  };
  auto asMeta = cfg;
  asMeta.paths.targetMeta = files.targetTruth;
  const fs::path copy = s.root / "renamed_truth.jsonl";
  fs::copy_file(files.targetTruth, copy);
  auto asCopy = cfg;
  asCopy.paths.targetMeta = copy;
  auto asText = cfg;
  asText.paths.sourceText = files.targetText;
  const bool a = refused([&] { runAdapt(asMeta, pre); });
  const bool b = refused([&] { runAdapt(asCopy, pre); });
  const bool c = refused([&] { runPretrain(asText); });
  report(10, a && b && c,
         fmt("truth file as target metadata: %s; renamed copy: %s; truth text as source text: %s",
             a ? "refused" : "accepted", b ? "refused" : "accepted", c ? "refused" : "accepted"));
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  try {
    const Scratch scratch;
    const auto bench = runBenchmark();
    criteria1to5(bench);
    criterion6();
    criterion7();
    criterion8();
    criterion9(scratch);
    criterion10(scratch);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
