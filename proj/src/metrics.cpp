#include "avwm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "avwm/errors.hpp"
#include "avwm/parallel.hpp"

namespace avwm::metrics {

namespace {

constexpr double kPsnrCap = 100.0;
constexpr double kSsimC1 = 1e-4;
constexpr double kSsimC2 = 9e-4;
constexpr int kStftWindow = 256;
constexpr int kStftHop = 128;
constexpr double kLogEps = 1e-10;

}  // namespace

double psnr(const Image& pred, const Image& ref) {
  if (pred.rgb.size() != ref.rgb.size())
    throw ContractError("psnr: image shapes differ");
  double mse = 0.0;
  for (size_t i = 0; i < pred.rgb.size(); ++i) {
    const double d = pred.rgb[i] - ref.rgb[i];
    mse += d * d;
  }
  mse /= pred.rgb.size();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

double ssim_window(const double* a, const double* b, int stride, int win) {
  double ma = 0.0, mb = 0.0;
  const int n = win * win;
  for (int r = 0; r < win; ++r)
    for (int c = 0; c < win; ++c) {
      ma += a[r * stride + c];
      mb += b[r * stride + c];
    }
  ma /= n;
  mb /= n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (int r = 0; r < win; ++r)
    for (int c = 0; c < win; ++c) {
      const double da = a[r * stride + c] - ma;
      const double db = b[r * stride + c] - mb;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
  va /= n;
  vb /= n;
  cov /= n;
  return ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
         ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
}

}  // namespace

double ssim_matrix(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
  if (a.size() != b.size() || static_cast<size_t>(h) * w != a.size())
    throw ContractError("ssim: matrix shapes differ");
  const int win = 8;
  double total = 0.0;
  int count = 0;
  for (int r = 0; r + win <= h; r += win)
    for (int c = 0; c + win <= w; c += win) {
      total += ssim_window(a.data() + static_cast<size_t>(r) * w + c,
                           b.data() + static_cast<size_t>(r) * w + c, w, win);
      ++count;
    }
  if (count == 0) throw ContractError("ssim: matrix smaller than one 8x8 window");
  return total / count;
}

double ssim_image(const Image& pred, const Image& ref) {
  if (pred.rgb.size() != ref.rgb.size() || pred.height != ref.height)
    throw ContractError("ssim: image shapes differ");
  const int h = pred.height, w = pred.width;
  std::vector<double> a(static_cast<size_t>(h) * w), b(a.size());
  double total = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        a[static_cast<size_t>(r) * w + c] = pred.at(r, c, ch);
        b[static_cast<size_t>(r) * w + c] = ref.at(r, c, ch);
      }
    total += ssim_matrix(a, b, h, w);
  }
  return total / 3.0;
}

namespace {

// Iterative radix-2 FFT, n a power of two.
void fft_inplace(std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace

Spectrogram stft(const std::vector<double>& waveform) {
  const int l = static_cast<int>(waveform.size());
  if (l < 2) throw ContractError("stft: waveform too short");
  // Reflection padding by half a window on both ends.
  std::vector<double> padded;
  padded.reserve(l + kStftWindow);
  for (int i = kStftHop; i >= 1; --i) padded.push_back(waveform[std::min(i, l - 1)]);
  padded.insert(padded.end(), waveform.begin(), waveform.end());
  for (int i = 1; i <= kStftHop; ++i) padded.push_back(waveform[std::max(0, l - 1 - i)]);

  std::vector<double> window(kStftWindow);
  for (int n = 0; n < kStftWindow; ++n)
    window[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / kStftWindow));

  Spectrogram s;
  s.bins = kStftWindow / 2 + 1;
  const int total = static_cast<int>(padded.size());
  std::vector<std::complex<double>> buf(kStftWindow);
  for (int start = 0; start + kStftWindow <= total; start += kStftHop) {
    for (int n = 0; n < kStftWindow; ++n) buf[n] = padded[start + n] * window[n];
    fft_inplace(buf);
    for (int b = 0; b < s.bins; ++b) s.data.push_back(buf[b]);
    ++s.frames;
  }
  return s;
}

namespace {

std::vector<double> channel(const Audio& a, int ch) {
  std::vector<double> out(a.samples);
  for (int i = 0; i < a.samples; ++i) out[i] = a.lr[2 * static_cast<size_t>(i) + ch];
  return out;
}

std::vector<double> log_power(const Spectrogram& s) {
  std::vector<double> out(s.data.size());
  for (size_t i = 0; i < s.data.size(); ++i)
    out[i] = std::log10(std::norm(s.data[i]) + kLogEps);
  return out;
}

}  // namespace

double lsd(const Audio& pred, const Audio& ref) {
  if (pred.samples != ref.samples) throw ContractError("lsd: waveform lengths differ");
  double total = 0.0;
  for (int ch = 0; ch < 2; ++ch) {
    const Spectrogram sp = stft(channel(pred, ch));
    const Spectrogram sr = stft(channel(ref, ch));
    const std::vector<double> lp = log_power(sp);
    const std::vector<double> lr = log_power(sr);
    double per_channel = 0.0;
    for (int f = 0; f < sp.frames; ++f) {
      double frame = 0.0;
      for (int b = 0; b < sp.bins; ++b) {
        const double d = lp[static_cast<size_t>(f) * sp.bins + b] -
                         lr[static_cast<size_t>(f) * sp.bins + b];
        frame += d * d;
      }
      per_channel += std::sqrt(frame / sp.bins);
    }
    total += per_channel / sp.frames;
  }
  return total / 2.0;
}

double spec_ssim(const Audio& pred, const Audio& ref) {
  if (pred.samples != ref.samples) throw ContractError("spec_ssim: waveform lengths differ");
  double total = 0.0;
  for (int ch = 0; ch < 2; ++ch) {
    const Spectrogram sp = stft(channel(pred, ch));
    const Spectrogram sr = stft(channel(ref, ch));
    std::vector<double> lp = log_power(sp);
    std::vector<double> lr = log_power(sr);
    // Joint min-max normalization so a shared gain cancels.
    double lo = lp[0], hi = lp[0];
    for (double v : lp) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (double v : lr) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
    for (double& v : lp) v = (v - lo) * scale;
    for (double& v : lr) v = (v - lo) * scale;
    total += ssim_matrix(lp, lr, sp.frames, sp.bins);
  }
  return total / 2.0;
}

const char* to_string(GenMode m) {
  return m == GenMode::fixed_step ? "fixed_step" : "rollout";
}

GenMode gen_mode_from_string(const std::string& s) {
  if (s == "fixed_step" || s == "fixed-step") return GenMode::fixed_step;
  if (s == "rollout") return GenMode::rollout;
  throw ConfigError("unknown generation mode: " + s);
}

// --- harness ---------------------------------------------------------------

namespace {

struct Window {
  int traj = 0;
  int t = 0;
};

struct SampleMetrics {
  double psnr = 0.0, ssim = 0.0, lsd = 0.0, sssim = 0.0, rmse = 0.0;
};

SampleMetrics compare(const Image& pred_img, const Audio& pred_aud, double pred_reward,
                      const Image& ref_img, const Audio& ref_aud, double true_reward) {
  SampleMetrics m;
  m.psnr = psnr(pred_img, ref_img);
  m.ssim = ssim_image(pred_img, ref_img);
  m.lsd = lsd(pred_aud, ref_aud);
  m.sssim = spec_ssim(pred_aud, ref_aud);
  const double dr = pred_reward - true_reward;
  m.rmse = dr * dr;
  return m;
}

avcdit::ContextLatents context_at(const diffusion::EncodedTrajectory& et, int t,
                                  const avcdit::ModelConfig& cfg) {
  avcdit::ContextLatents ctx;
  for (int f = t - cfg.context_frames + 1; f <= t; ++f) {
    tokenizers::TokenMatrix v, a;
    diffusion::fill_frame_latents(et, std::max(0, f), cfg, v, a);
    ctx.visual.push_back(std::move(v));
    ctx.audio.push_back(std::move(a));
  }
  return ctx;
}

}  // namespace

EvalReport eval_harness(const avcdit::ModelConfig& cfg, const avcdit::ParamStore* params,
                        const diffusion::NoiseSchedule& schedule, const trainer::Dataset& data,
                        const std::string& split, const EvalConfig& eval) {
  if (!eval.oracle && params == nullptr)
    throw UsageError("eval: a checkpoint is required unless running in oracle mode");
  const auto& trajectories = data.split(split);
  const int horizon = eval.horizon;

  // Windows need m-1 frames of history and horizon frames of future.
  std::vector<Window> windows;
  {
    std::vector<size_t> usable;
    for (size_t i = 0; i < trajectories.size(); ++i)
      if (trajectories[i].length() > cfg.context_frames + horizon) usable.push_back(i);
    if (usable.empty()) throw UsageError("eval: split '" + split + "' has no usable windows");
    Rng rng = Rng::derive(eval.seed, 0xe7a1);
    for (int w = 0; w < eval.windows; ++w) {
      const size_t ti = usable[rng.below(usable.size())];
      const int t_lo = cfg.context_frames - 1;
      const int t_hi = trajectories[ti].length() - 1 - horizon;
      windows.push_back({static_cast<int>(ti), static_cast<int>(rng.range(t_lo, t_hi))});
    }
  }

  // metric key -> per-run accumulator
  const char* names[5] = {"psnr", "ssim", "lsd", "spec_ssim", "reward_mse"};
  std::vector<std::array<double, 5>> run_totals(eval.runs, {0, 0, 0, 0, 0});
  std::vector<std::vector<std::array<double, 5>>> bucket_totals(
      eval.runs, std::vector<std::array<double, 5>>(horizon, {0, 0, 0, 0, 0}));

  struct Task {
    int run;
    int window;
  };
  std::vector<Task> tasks;
  for (int r = 0; r < eval.runs; ++r)
    for (size_t w = 0; w < windows.size(); ++w) tasks.push_back({r, static_cast<int>(w)});

  std::mutex dump_mutex;
  parallel_for(
      tasks.size(),
      [&](size_t task_index) {
        const auto [run, wi] = tasks[task_index];
        const Window& win = windows[wi];
        const diffusion::EncodedTrajectory& et = trajectories[win.traj];
        Rng rng = Rng::derive(eval.seed, 0x5a3f + run, task_index);

        std::vector<SampleMetrics> per_step(horizon);
        if (eval.mode == GenMode::fixed_step) {
          avcdit::ContextLatents ctx = context_at(et, win.t, cfg);
          for (int dt = 1; dt <= horizon; ++dt) {
            const int target = win.t + dt;
            const Image ref_img = et.traj.decode_image(target);
            const Audio ref_aud = et.traj.decode_audio(target);
            const double true_reward = et.traj.cumulative_reward(win.t, target);
            Image pred_img;
            Audio pred_aud;
            double pred_reward = 0.0;
            if (eval.oracle) {
              pred_img = ref_img;
              pred_aud = ref_aud;
              pred_reward = true_reward;
            } else {
              const diffusion::BodyDelta delta =
                  diffusion::aggregate_action(et.poses[win.t], et.poses[target]);
              avcdit::ConditioningInputs cond{delta.dx, delta.dy, delta.dtheta, dt, 1};
              diffusion::Prediction pred =
                  diffusion::sample_fixed_step(cfg, *params, schedule, ctx, cond, rng);
              pred_img = std::move(pred.image);
              pred_aud = std::move(pred.audio);
              pred_reward = pred.reward;
            }
            per_step[dt - 1] =
                compare(pred_img, pred_aud, pred_reward, ref_img, ref_aud, true_reward);
            if (!eval.dump_dir.empty() && run == 0 && wi == 0) {
              std::lock_guard<std::mutex> lock(dump_mutex);
              namespace fs = std::filesystem;
              fs::create_directories(eval.dump_dir);
              char buf[64];
              std::snprintf(buf, sizeof buf, "fixed_dt%02d", dt);
              write_ppm(pred_img, eval.dump_dir + "/" + buf + "_pred.ppm");
              write_ppm(ref_img, eval.dump_dir + "/" + buf + "_ref.ppm");
              write_wav(pred_aud, et.traj.sample_rate, eval.dump_dir + "/" + buf + "_pred.wav");
              write_wav(ref_aud, et.traj.sample_rate, eval.dump_dir + "/" + buf + "_ref.wav");
            }
          }
        } else {
          std::vector<soundworld::Action> actions(et.traj.actions.begin() + win.t,
                                                  et.traj.actions.begin() + win.t + horizon);
          std::vector<diffusion::Prediction> preds;
          if (!eval.oracle)
            preds = diffusion::rollout_generate(cfg, *params, schedule,
                                                context_at(et, win.t, cfg), actions, horizon,
                                                rng);
          double pred_cum = 0.0;
          for (int i = 0; i < horizon; ++i) {
            const int target = win.t + i + 1;
            const Image ref_img = et.traj.decode_image(target);
            const Audio ref_aud = et.traj.decode_audio(target);
            const double true_cum = et.traj.cumulative_reward(win.t, target);
            if (eval.oracle) {
              per_step[i] = compare(ref_img, ref_aud, true_cum, ref_img, ref_aud, true_cum);
            } else {
              pred_cum += preds[i].reward;
              per_step[i] = compare(preds[i].image, preds[i].audio, pred_cum, ref_img, ref_aud,
                                    true_cum);
            }
          }
        }

        for (int i = 0; i < horizon; ++i) {
          const SampleMetrics& m = per_step[i];
          const double vals[5] = {m.psnr, m.ssim, m.lsd, m.sssim, m.rmse};
          for (int j = 0; j < 5; ++j) bucket_totals[run][i][j] += vals[j];
        }
      },
      eval.threads);

  for (int r = 0; r < eval.runs; ++r)
    for (int i = 0; i < horizon; ++i)
      for (int j = 0; j < 5; ++j) {
        bucket_totals[r][i][j] /= windows.size();
        run_totals[r][j] += bucket_totals[r][i][j] / horizon;
      }

  EvalReport report;
  report.mode = eval.mode;
  report.horizon = horizon;
  report.windows = static_cast<int>(windows.size());
  report.runs = eval.runs;
  for (int j = 0; j < 5; ++j) {
    double mean = 0.0;
    for (int r = 0; r < eval.runs; ++r) mean += run_totals[r][j];
    mean /= eval.runs;
    double var = 0.0;
    for (int r = 0; r < eval.runs; ++r) var += (run_totals[r][j] - mean) * (run_totals[r][j] - mean);
    report.aggregate[names[j]] = {mean, std::sqrt(var / eval.runs)};
  }
  report.per_dt.resize(horizon);
  for (int i = 0; i < horizon; ++i) {
    double v[5] = {0, 0, 0, 0, 0};
    for (int r = 0; r < eval.runs; ++r)
      for (int j = 0; j < 5; ++j) v[j] += bucket_totals[r][i][j] / eval.runs;
    report.per_dt[i] = {v[0], v[1], v[2], v[3], v[4]};
  }

  // Copy-last-frame and predict-zero baselines, deterministic over windows.
  {
    double base[5] = {0, 0, 0, 0, 0};
    int count = 0;
    for (const Window& win : windows) {
      const diffusion::EncodedTrajectory& et = trajectories[win.traj];
      const Image last_img = et.traj.decode_image(win.t);
      const Audio last_aud = et.traj.decode_audio(win.t);
      for (int dt = 1; dt <= horizon; ++dt) {
        const int target = win.t + dt;
        const SampleMetrics m =
            compare(last_img, last_aud, 0.0, et.traj.decode_image(target),
                    et.traj.decode_audio(target), et.traj.cumulative_reward(win.t, target));
        const double vals[5] = {m.psnr, m.ssim, m.lsd, m.sssim, m.rmse};
        for (int j = 0; j < 5; ++j) base[j] += vals[j];
        ++count;
      }
    }
    report.baseline["copy_last_psnr"] = base[0] / count;
    report.baseline["copy_last_ssim"] = base[1] / count;
    report.baseline["copy_last_lsd"] = base[2] / count;
    report.baseline["copy_last_spec_ssim"] = base[3] / count;
    report.baseline["predict_zero_reward_mse"] = base[4] / count;

    // Copy-last baseline at dt = 1 specifically (the sharpest comparison).
    double psnr_dt1 = 0.0, rmse_dt1 = 0.0;
    for (const Window& win : windows) {
      const diffusion::EncodedTrajectory& et = trajectories[win.traj];
      psnr_dt1 += psnr(et.traj.decode_image(win.t), et.traj.decode_image(win.t + 1));
      const double r = et.traj.cumulative_reward(win.t, win.t + 1);
      rmse_dt1 += r * r;
    }
    report.baseline["copy_last_psnr_dt1"] = psnr_dt1 / windows.size();
    report.baseline["predict_zero_reward_mse_dt1"] = rmse_dt1 / windows.size();
  }
  return report;
}

// --- report rendering -------------------------------------------------------

std::string EvalReport::render_text() const {
  std::ostringstream out;
  char buf[256];
  out << "mode: " << to_string(mode) << "  windows: " << windows << "  runs: " << runs << "\n";
  out << "metric        mean        std\n";
  for (const auto& [name, stats] : aggregate) {
    std::snprintf(buf, sizeof buf, "%-12s %10.4f %10.4f\n", name.c_str(), stats.mean,
                  stats.stddev);
    out << buf;
  }
  out << "baselines:\n";
  for (const auto& [name, value] : baseline) {
    std::snprintf(buf, sizeof buf, "  %-26s %10.4f\n", name.c_str(), value);
    out << buf;
  }
  out << "per-offset buckets (dt, psnr, ssim, lsd, spec_ssim, reward_mse):\n";
  for (size_t i = 0; i < per_dt.size(); ++i) {
    std::snprintf(buf, sizeof buf, "  %2zu %10.4f %8.4f %8.4f %10.4f %12.6f\n", i + 1,
                  per_dt[i].psnr, per_dt[i].ssim, per_dt[i].lsd, per_dt[i].spec_ssim,
                  per_dt[i].reward_mse);
    out << buf;
  }
  // Four-interval summary over the horizon.
  const int interval = std::max(1, static_cast<int>(per_dt.size()) / 4);
  out << "interval means (psnr / lsd / reward_mse):\n";
  for (size_t lo = 0; lo < per_dt.size(); lo += interval) {
    const size_t hi = std::min(per_dt.size(), lo + interval);
    double p = 0, l = 0, r = 0;
    for (size_t i = lo; i < hi; ++i) {
      p += per_dt[i].psnr;
      l += per_dt[i].lsd;
      r += per_dt[i].reward_mse;
    }
    const double n = static_cast<double>(hi - lo);
    std::snprintf(buf, sizeof buf, "  dt %2zu-%-2zu %10.4f %8.4f %12.6f\n", lo + 1, hi, p / n,
                  l / n, r / n);
    out << buf;
  }
  return out.str();
}

void EvalReport::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("report: cannot open " + path + " for writing");
  char buf[128];
  out << "AVWM-EVAL v1\n";
  out << "mode: " << to_string(mode) << "\n";
  out << "horizon: " << horizon << "\n";
  out << "windows: " << windows << "\n";
  out << "runs: " << runs << "\n";
  for (const auto& [name, stats] : aggregate) {
    std::snprintf(buf, sizeof buf, "metric.%s.mean: %.17g\n", name.c_str(), stats.mean);
    out << buf;
    std::snprintf(buf, sizeof buf, "metric.%s.std: %.17g\n", name.c_str(), stats.stddev);
    out << buf;
  }
  for (const auto& [name, value] : baseline) {
    std::snprintf(buf, sizeof buf, "baseline.%s: %.17g\n", name.c_str(), value);
    out << buf;
  }
  for (size_t i = 0; i < per_dt.size(); ++i) {
    std::snprintf(buf, sizeof buf, "dt.%zu: %.17g %.17g %.17g %.17g %.17g\n", i + 1,
                  per_dt[i].psnr, per_dt[i].ssim, per_dt[i].lsd, per_dt[i].spec_ssim,
                  per_dt[i].reward_mse);
    out << buf;
  }
  out << "end\n";
}

EvalReport EvalReport::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("report: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "AVWM-EVAL v1") throw UsageError("report: bad magic in " + path);
  EvalReport r;
  while (std::getline(in, line) && line != "end") {
    const auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    const std::string value = line.substr(colon + 2);
    if (key == "mode") {
      r.mode = gen_mode_from_string(value);
    } else if (key == "horizon") {
      r.horizon = std::stoi(value);
      r.per_dt.resize(r.horizon);
    } else if (key == "windows") {
      r.windows = std::stoi(value);
    } else if (key == "runs") {
      r.runs = std::stoi(value);
    } else if (key.rfind("metric.", 0) == 0) {
      const auto dot = key.rfind('.');
      const std::string name = key.substr(7, dot - 7);
      if (key.substr(dot + 1) == "mean")
        r.aggregate[name].mean = std::stod(value);
      else
        r.aggregate[name].stddev = std::stod(value);
    } else if (key.rfind("baseline.", 0) == 0) {
      r.baseline[key.substr(9)] = std::stod(value);
    } else if (key.rfind("dt.", 0) == 0) {
      const size_t i = std::stoul(key.substr(3)) - 1;
      std::istringstream vs(value);
      if (i < r.per_dt.size())
        vs >> r.per_dt[i].psnr >> r.per_dt[i].ssim >> r.per_dt[i].lsd >> r.per_dt[i].spec_ssim >>
            r.per_dt[i].reward_mse;
    }
  }
  return r;
}

void write_ppm(const Image& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("ppm: cannot open " + path + " for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  for (double v : image.rgb) {
    const unsigned char byte =
        static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    out.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

void write_wav(const Audio& audio, int sample_rate, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("wav: cannot open " + path + " for writing");
  const uint32_t data_bytes = static_cast<uint32_t>(audio.lr.size() * 2);
  auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(2);  // stereo
  u32(static_cast<uint32_t>(sample_rate));
  u32(static_cast<uint32_t>(sample_rate * 4));
  u16(4);
  u16(16);
  out.write("data", 4);
  u32(data_bytes);
  for (double v : audio.lr) {
    const int16_t s = static_cast<int16_t>(std::lround(32767.0 * std::clamp(v, -1.0, 1.0)));
    out.write(reinterpret_cast<const char*>(&s), 2);
  }
}

}  // namespace avwm::metrics
