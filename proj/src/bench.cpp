#include "e2llm/bench.hpp"

#include "e2llm/tensor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace e2llm {

namespace {

using MatF = Mat<float>;

/// Live-byte accounting for the buffers a forward pass holds; reported peak
/// is the allocator-tracked maximum, not an OS measurement.
struct MemTracker {
  std::int64_t live = 0;
  std::int64_t peak = 0;
  void alloc(std::int64_t bytes) {
    live += bytes;
    peak = std::max(peak, live);
  }
  void release(std::int64_t bytes) { live -= bytes; }
};

std::int64_t bytes_of(Eigen::Index rows, Eigen::Index cols) {
  return static_cast<std::int64_t>(rows) * cols * static_cast<std::int64_t>(sizeof(float));
}

struct ToyWeights {
  MatF wq, wk, wv, wo, fc1, fc2;       // shared by both modes
  MatF adapter1, adapter2;             // e2llm only
  ToyWeights(int d, int dff, std::mt19937_64& rng) {
    auto mk = [&rng](Eigen::Index r, Eigen::Index c) {
      std::normal_distribution<float> g(0.0f, 0.05f);
      MatF m(r, c);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
      return m;
    };
    wq = mk(d, d);
    wk = mk(d, d);
    wv = mk(d, d);
    wo = mk(d, d);
    fc1 = mk(dff, d);
    fc2 = mk(d, dff);
    adapter1 = mk(d, d);
    adapter2 = mk(d, d);
  }
};

void softmax_rows_inplace(MatF& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const float mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

/// One causal attention + feed-forward block with row-blocked score matrices.
MatF attention_block(const MatF& x, const ToyWeights& w, bool causal, int query_block,
                     MemTracker& mem) {
  const Eigen::Index n = x.rows();
  MatF q = x * w.wq.transpose();
  MatF k = x * w.wk.transpose();
  MatF v = x * w.wv.transpose();
  mem.alloc(3 * bytes_of(n, x.cols()));
  MatF attn(n, x.cols());
  mem.alloc(bytes_of(n, x.cols()));
  const Eigen::Index bs = std::max<Eigen::Index>(1, query_block);
  for (Eigen::Index q0 = 0; q0 < n; q0 += bs) {
    const Eigen::Index rows = std::min(bs, n - q0);
    MatF scores = q.middleRows(q0, rows) * k.transpose() / std::sqrt(float(x.cols()));
    mem.alloc(bytes_of(rows, n));
    if (causal) {
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = q0 + i + 1; j < n; ++j)
          scores(i, j) = -std::numeric_limits<float>::infinity();
    }
    softmax_rows_inplace(scores);
    attn.middleRows(q0, rows) = scores * v;
    mem.release(bytes_of(rows, n));
  }
  MatF h = x + attn * w.wo.transpose();
  mem.release(3 * bytes_of(n, x.cols()) + bytes_of(n, x.cols()));
  MatF ff = (h * w.fc1.transpose()).array().max(0.0f).matrix() * w.fc2.transpose();
  mem.alloc(bytes_of(n, w.fc1.rows()));
  mem.release(bytes_of(n, w.fc1.rows()));
  return h + ff;
}

MatF random_input(Eigen::Index n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  MatF x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g(rng);
  return x;
}

double baseline_forward(const MatF& x, const ToyWeights& w, int query_block, MemTracker& mem) {
  MatF out = attention_block(x, w, true, query_block, mem);
  return static_cast<double>(out.sum());  // keep the work observable
}

double e2llm_forward(const MatF& x, const ToyWeights& w, int chunk_size, int query_block,
                     int threads, MemTracker& mem) {
  const Eigen::Index n = x.rows();
  const Eigen::Index n_chunks = (n + chunk_size - 1) / chunk_size;
  MatF cls(n_chunks, x.cols());
  mem.alloc(bytes_of(n_chunks, x.cols()));
  auto encode_range = [&](Eigen::Index lo, Eigen::Index hi, MemTracker& m) {
    for (Eigen::Index c = lo; c < hi; ++c) {
      const Eigen::Index start = c * chunk_size;
      const Eigen::Index len = std::min<Eigen::Index>(chunk_size, n - start);
      MatF chunk = x.middleRows(start, len);
      MatF enc = attention_block(chunk, w, false, query_block, m);
      cls.row(c) = enc.row(0);
    }
  };
  if (threads <= 1 || n_chunks < 2) {
    encode_range(0, n_chunks, mem);
  } else {
    const int nw = std::min<Eigen::Index>(threads, n_chunks);
    std::vector<MemTracker> local(static_cast<std::size_t>(nw));
    std::vector<std::thread> pool;
    for (int t = 0; t < nw; ++t) {
      const Eigen::Index lo = n_chunks * t / nw, hi = n_chunks * (t + 1) / nw;
      pool.emplace_back(encode_range, lo, hi, std::ref(local[static_cast<std::size_t>(t)]));
    }
    for (auto& th : pool) th.join();
    for (const auto& m : local) mem.alloc(m.peak), mem.release(m.peak);
  }
  MatF soft = (cls * w.adapter1.transpose()).array().tanh().matrix() * w.adapter2.transpose();
  MatF out = attention_block(soft, w, true, query_block, mem);
  mem.release(bytes_of(n_chunks, x.cols()));
  return static_cast<double>(out.sum());
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

double fit_slope(const std::vector<std::pair<double, double>>& xy) {
  if (xy.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : xy) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(xy.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

ScalingResult run_scaling(const BenchConfig& cfg, const std::vector<std::int64_t>& lengths) {
  if (lengths.size() < 4) throw std::invalid_argument("run_scaling: need at least 4 lengths");
  for (std::size_t i = 1; i < lengths.size(); ++i)
    if (lengths[i] <= lengths[i - 1])
      throw std::invalid_argument("run_scaling: lengths must be strictly increasing");
  if (cfg.repeats < 3) throw std::invalid_argument("run_scaling: repeats must be >= 3");

  std::mt19937_64 rng(cfg.seed);
  ToyWeights w(cfg.d_model, cfg.d_ff, rng);
  ScalingResult result;
  volatile double sink = 0.0;

  std::vector<std::pair<double, double>> base_pts, e2_pts;
  for (std::int64_t L : lengths) {
    MatF x = random_input(L, cfg.d_model, cfg.seed ^ static_cast<std::uint64_t>(L));
    for (const std::string mode : {"baseline", "e2llm"}) {
      TimingRecord rec;
      rec.mode = mode;
      rec.length = L;
      rec.chunk_size = cfg.chunk_size;
      if (mode == "baseline" && L > cfg.baseline_max_positions) {
        rec.measurable = false;
        result.records.push_back(rec);
        continue;
      }
      std::vector<double> times;
      MemTracker mem;
      for (int r = 0; r < cfg.repeats; ++r) {
        MemTracker m;
        const auto t0 = std::chrono::steady_clock::now();
        if (mode == "baseline")
          sink = sink + baseline_forward(x, w, cfg.query_block, m);
        else
          sink = sink + e2llm_forward(x, w, cfg.chunk_size, cfg.query_block, cfg.threads, m);
        times.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count());
        mem.peak = std::max(mem.peak, m.peak);
      }
      rec.ms_median = quantile(times, 0.5);
      rec.ms_p10 = quantile(times, 0.1);
      rec.ms_p90 = quantile(times, 0.9);
      rec.mem_bytes = mem.peak;
      result.records.push_back(rec);
      auto& pts = (mode == "baseline") ? base_pts : e2_pts;
      pts.emplace_back(std::log(static_cast<double>(L)), std::log(rec.ms_median));
    }
  }
  result.baseline_slope = fit_slope(base_pts);
  result.e2llm_slope = fit_slope(e2_pts);

  // Constant-factor speedup of pooled vs serial chunk encoding at the
  // largest length.
  {
    const std::int64_t L = lengths.back();
    MatF x = random_input(L, cfg.d_model, cfg.seed ^ static_cast<std::uint64_t>(L));
    auto time_once = [&](int threads) {
      MemTracker m;
      const auto t0 = std::chrono::steady_clock::now();
      sink = sink + e2llm_forward(x, w, cfg.chunk_size, cfg.query_block, threads, m);
      return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
    };
    const int pooled = std::max(2, cfg.threads);
    double serial = 0, parallel = 0;
    for (int r = 0; r < cfg.repeats; ++r) {
      serial += time_once(1);
      parallel += time_once(pooled);
    }
    result.parallel_speedup = parallel > 0.0 ? serial / parallel : 1.0;
  }
  return result;
}

void write_bench_csv(const ScalingResult& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("bench: cannot write " + path);
  f << "mode,L,C,ms_median,ms_p10,ms_p90,mem_bytes\n";
  for (const auto& rec : r.records) {
    if (!rec.measurable) continue;
    f << rec.mode << ',' << rec.length << ',' << rec.chunk_size << ',' << rec.ms_median << ','
      << rec.ms_p10 << ',' << rec.ms_p90 << ',' << rec.mem_bytes << '\n';
  }
}

std::string bench_summary_json(const ScalingResult& r) {
  std::ostringstream os;
  os.precision(6);
  os << "{\"baseline_slope\": " << r.baseline_slope
     << ", \"e2llm_slope\": " << r.e2llm_slope
     << ", \"parallel_speedup\": " << r.parallel_speedup << "}";
  return os.str();
}

}  // namespace e2llm
