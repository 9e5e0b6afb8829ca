#pragma once

#include <complex>
#include <map>
#include <string>
#include <vector>

#include "avwm/trainer.hpp"

namespace avwm::metrics {

using soundworld::Audio;
using soundworld::Image;

// Peak signal-to-noise ratio in dB for images in [0,1]; identical inputs hit
// the +inf case and are reported as the 100 dB cap used in tables.
double psnr(const Image& pred, const Image& ref);

// Structural similarity with 8x8 non-overlapping windows, C1=1e-4, C2=9e-4,
// averaged over windows and channels.
double ssim_image(const Image& pred, const Image& ref);

// SSIM over a single-channel matrix (used for spectrogram similarity).
double ssim_matrix(const std::vector<double>& a, const std::vector<double>& b, int h, int w);

// Complex spectrogram: 256-sample Hann window, hop 128, reflection padding.
struct Spectrogram {
  int frames = 0;
  int bins = 0;  // 129
  std::vector<std::complex<double>> data;  // frames x bins row-major

  const std::complex<double>& at(int f, int b) const {
    return data[static_cast<size_t>(f) * bins + b];
  }
};
Spectrogram stft(const std::vector<double>& waveform);

// Log-spectral distance, computed per channel and averaged.
double lsd(const Audio& pred, const Audio& ref);

// SSIM between log-power spectrograms, min-max normalized jointly per pair;
// channels averaged.
double spec_ssim(const Audio& pred, const Audio& ref);

enum class GenMode { fixed_step, rollout };
const char* to_string(GenMode m);
GenMode gen_mode_from_string(const std::string& s);

struct MetricStats {
  double mean = 0.0;
  double stddev = 0.0;
};

// Per-offset bucket means (averaged over windows and runs).
struct DtBucket {
  double psnr = 0.0;
  double ssim = 0.0;
  double lsd = 0.0;
  double spec_ssim = 0.0;
  double reward_mse = 0.0;
};

struct EvalReport {
  GenMode mode = GenMode::fixed_step;
  int horizon = 16;
  int windows = 0;
  int runs = 0;
  std::map<std::string, MetricStats> aggregate;   // metric name -> stats over runs
  std::vector<DtBucket> per_dt;                   // horizon buckets (dt = 1..horizon)
  std::map<std::string, double> baseline;         // copy-last / predict-zero rows

  std::string render_text() const;
  void save(const std::string& path) const;       // structured text
  static EvalReport load(const std::string& path);
};

struct EvalConfig {
  GenMode mode = GenMode::fixed_step;
  int horizon = 16;
  int windows = 6;  // evaluation windows drawn from the split
  int runs = 3;     // seeded sampling runs aggregated as mean +- std
  uint64_t seed = 0;
  bool oracle = false;       // feed ground-truth futures (harness self-test)
  std::string dump_dir;      // when set, write predicted/reference PPM + WAV
  unsigned threads = 0;
};

// Evaluates a checkpoint (or the oracle) on a dataset split under one
// generation mode. params may be null only in oracle mode.
EvalReport eval_harness(const avcdit::ModelConfig& cfg, const avcdit::ParamStore* params,
                        const diffusion::NoiseSchedule& schedule, const trainer::Dataset& data,
                        const std::string& split, const EvalConfig& eval);

// Image/audio dump helpers (binary PPM, 16-bit PCM WAV).
void write_ppm(const Image& image, const std::string& path);
void write_wav(const Audio& audio, int sample_rate, const std::string& path);

}  // namespace avwm::metrics
