#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include "avwm/errors.hpp"
#include "avwm/metrics.hpp"
#include "avwm/rng.hpp"

using namespace avwm;
using namespace avwm::metrics;
using soundworld::Audio;
using soundworld::Image;

namespace {

Image random_image(int size, Rng& rng) {
  Image img{size, size, std::vector<double>(static_cast<size_t>(size) * size * 3)};
  for (auto& v : img.rgb) v = rng.uniform();
  return img;
}

Audio tone(int samples, double freq, double amp, int fs = 16000) {
  Audio a{samples, std::vector<double>(2 * static_cast<size_t>(samples))};
  for (int i = 0; i < samples; ++i) {
    const double v = amp * std::sin(2.0 * std::numbers::pi * freq * i / fs);
    a.lr[2 * i] = v;
    a.lr[2 * i + 1] = v;
  }
  return a;
}

}  // namespace

TEST_CASE("psnr and ssim on identical images") {
  Rng rng(1);
  Image img = random_image(32, rng);
  CHECK(psnr(img, img) == 100.0);
  CHECK(ssim_image(img, img) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a uniform 0.1 offset gives exactly 20 dB") {
  Rng rng(2);
  Image ref{32, 32, std::vector<double>(32 * 32 * 3)};
  for (auto& v : ref.rgb) v = rng.uniform(0.2, 0.7);  // room for the offset
  Image pred = ref;
  for (auto& v : pred.rgb) v += 0.1;
  CHECK(psnr(pred, ref) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("psnr ordering: the exact copy beats the mean-image predictor") {
  Rng rng(3);
  Image ref = random_image(32, rng);
  double mean = 0.0;
  for (double v : ref.rgb) mean += v;
  mean /= ref.rgb.size();
  Image mean_img{32, 32, std::vector<double>(ref.rgb.size(), mean)};
  CHECK(psnr(ref, ref) >= psnr(mean_img, ref));
}

TEST_CASE("stft matches a naive direct DFT oracle") {
  Rng rng(4);
  std::vector<double> wave(700);
  for (auto& v : wave) v = rng.uniform(-1.0, 1.0);
  Spectrogram s = stft(wave);
  CHECK(s.bins == 129);
  CHECK(s.frames >= 4);

  // Rebuild one frame by hand: reflection padding, Hann window, direct DFT.
  const int check_frame = 2;
  const int start = check_frame * 128;
  std::vector<double> padded;
  const int l = static_cast<int>(wave.size());
  for (int i = 128; i >= 1; --i) padded.push_back(wave[std::min(i, l - 1)]);
  padded.insert(padded.end(), wave.begin(), wave.end());
  for (int i = 1; i <= 128; ++i) padded.push_back(wave[std::max(0, l - 1 - i)]);
  for (int b = 0; b < 129; ++b) {
    std::complex<double> acc(0.0, 0.0);
    for (int n = 0; n < 256; ++n) {
      const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / 256));
      const double ang = -2.0 * std::numbers::pi * b * n / 256;
      acc += padded[start + n] * w * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    CHECK(std::abs(acc - s.at(check_frame, b)) < 1e-9);
  }
}

TEST_CASE("lsd: zero on identity, oracle value for a 10x gain, symmetric") {
  Audio ref = tone(2400, 800.0, 0.08);
  CHECK(lsd(ref, ref) == 0.0);

  Audio scaled = ref;
  for (auto& v : scaled.lr) v *= 10.0;
  // Oracle: recompute from the spectrogram definition directly.
  const double measured = lsd(scaled, ref);
  double expected = 0.0;
  for (int ch = 0; ch < 2; ++ch) {
    std::vector<double> c(2400), cs(2400);
    for (int i = 0; i < 2400; ++i) {
      c[i] = ref.lr[2 * i + ch];
      cs[i] = scaled.lr[2 * i + ch];
    }
    Spectrogram a = stft(c), b = stft(cs);
    double per = 0.0;
    for (int f = 0; f < a.frames; ++f) {
      double frame = 0.0;
      for (int bin = 0; bin < a.bins; ++bin) {
        const double d = std::log10(std::norm(b.at(f, bin)) + 1e-10) -
                         std::log10(std::norm(a.at(f, bin)) + 1e-10);
        frame += d * d;
      }
      per += std::sqrt(frame / a.bins);
    }
    expected += per / a.frames / 2.0;
  }
  CHECK(measured == doctest::Approx(expected).epsilon(1e-12));
  CHECK(measured > 0.1);  // a 10x gain is far from zero distance
  CHECK(lsd(scaled, ref) == doctest::Approx(lsd(ref, scaled)).epsilon(1e-12));
}

TEST_CASE("spec_ssim: identity is 1, noise vs tone is low, shared gain cancels") {
  Audio ref = tone(2400, 800.0, 0.3);
  CHECK(spec_ssim(ref, ref) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(5);
  Audio noise{2400, std::vector<double>(4800)};
  for (auto& v : noise.lr) v = rng.uniform(-0.3, 0.3);
  CHECK(spec_ssim(noise, ref) < 0.5);

  // A shared gain shifts both log-power spectrograms by the same constant,
  // which the joint min-max normalization removes. Exact only while all bins
  // stay well above the 1e-10 log floor, hence broadband signals here.
  Audio ref2{2400, std::vector<double>(4800)};
  Audio pred2{2400, std::vector<double>(4800)};
  Rng rng2(6);
  for (auto& v : ref2.lr) v = rng2.uniform(-0.4, 0.4);
  for (size_t i = 0; i < pred2.lr.size(); ++i)
    pred2.lr[i] = 0.7 * ref2.lr[i] + rng2.uniform(-0.1, 0.1);
  const double before = spec_ssim(pred2, ref2);
  Audio ref2s = ref2, pred2s = pred2;
  for (auto& v : ref2s.lr) v *= 2.0;
  for (auto& v : pred2s.lr) v *= 2.0;
  CHECK(spec_ssim(pred2s, ref2s) == doctest::Approx(before).epsilon(1e-6));
}

TEST_CASE("channel averaging: a mono-duplicated pair equals its single channel") {
  Audio a = tone(2400, 640.0, 0.2);
  Audio b = tone(2400, 700.0, 0.2);
  // Both channels identical by construction, so the two-channel average
  // equals each channel's own value; verify consistency via symmetry of the
  // construction (left channel only differs if interleaving is broken).
  Audio left_only_a = a, left_only_b = b;
  const double full = lsd(a, b);
  for (int i = 0; i < 2400; ++i) {
    left_only_a.lr[2 * i + 1] = left_only_a.lr[2 * i];
    left_only_b.lr[2 * i + 1] = left_only_b.lr[2 * i];
  }
  CHECK(lsd(left_only_a, left_only_b) == doctest::Approx(full).epsilon(1e-12));
}

TEST_CASE("eval harness: oracle mode is the fixed point, reports have 16 buckets") {
  namespace fs = std::filesystem;
  const auto root = fs::temp_directory_path() / "avwm_metrics_dataset";
  static bool built = false;
  if (!built || !fs::exists(root / "manifest.txt")) {
    fs::remove_all(root);
    trajgen::DatasetConfig dcfg;
    dcfg.num_scenes = 9;
    dcfg.trajectories_per_scene = 3;
    dcfg.seed = 31;
    dcfg.scene_cells = 48;
    dcfg.sample.render.image_size = 16;
    trajgen::build_dataset(root.string(), dcfg);
    built = true;
  }

  avcdit::ModelConfig cfg;
  cfg.width = 16;
  cfg.num_blocks = 1;
  cfg.num_heads = 2;
  cfg.context_frames = 2;
  cfg.visual = {16, 8};
  cfg.audio = {2400, 600};
  trainer::Dataset data = trainer::Dataset::load(root.string(), cfg, {"test"});
  diffusion::NoiseSchedule schedule({10, 1e-3, 0.2});

  EvalConfig eval;
  eval.mode = GenMode::fixed_step;
  eval.windows = 2;
  eval.runs = 2;
  eval.oracle = true;
  EvalReport report = eval_harness(cfg, nullptr, schedule, data, "test", eval);
  CHECK(report.per_dt.size() == 16);
  CHECK(report.aggregate.at("psnr").mean == 100.0);
  CHECK(report.aggregate.at("ssim").mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.aggregate.at("lsd").mean == 0.0);
  CHECK(report.aggregate.at("reward_mse").mean == 0.0);
  CHECK(report.baseline.count("copy_last_psnr") == 1);
  CHECK(report.baseline.count("predict_zero_reward_mse") == 1);

  // Report round-trip through the structured-text file.
  const auto path = fs::temp_directory_path() / "avwm_eval_report.txt";
  report.save(path.string());
  EvalReport loaded = EvalReport::load(path.string());
  CHECK(loaded.aggregate.at("psnr").mean == report.aggregate.at("psnr").mean);
  CHECK(loaded.per_dt.size() == report.per_dt.size());
  CHECK(loaded.baseline.at("copy_last_psnr") == report.baseline.at("copy_last_psnr"));
  fs::remove(path);

  // A rollout-mode oracle run is also a fixed point, with per-step buckets.
  eval.mode = GenMode::rollout;
  EvalReport rollout = eval_harness(cfg, nullptr, schedule, data, "test", eval);
  CHECK(rollout.per_dt.size() == 16);
  CHECK(rollout.aggregate.at("psnr").mean == 100.0);

  // A tiny untrained model produces finite metrics end to end.
  ndgrad::ParamStore params = avcdit::init_params(cfg, 7);
  eval.mode = GenMode::fixed_step;
  eval.oracle = false;
  eval.windows = 1;
  eval.runs = 1;
  eval.horizon = 4;
  EvalReport model_report = eval_harness(cfg, &params, schedule, data, "test", eval);
  CHECK(model_report.per_dt.size() == 4);
  CHECK(std::isfinite(model_report.aggregate.at("psnr").mean));
  CHECK(std::isfinite(model_report.aggregate.at("lsd").mean));
  CHECK(model_report.aggregate.at("psnr").mean < 100.0);
}
