// Copyright 2026 The spellkd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spellkd/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include "spellkd/error.hpp"

namespace spellkd::bench {
namespace {

using Clock = std::chrono::steady_clock;

struct PhaseResult {
  std::vector<Duration> samples;
  std::size_t ok = 0;
  std::size_t timeouts = 0;
  std::size_t errors = 0;
};

PhaseResult run_phase(const CorrectFn& correct, const LoadProfile& profile, std::size_t first,
                      std::size_t count) {
  PhaseResult result;
  std::mutex lock;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const auto k = next.fetch_add(1);
      if (k >= count) return;
      const auto& input = profile.inputs[(first + k) % profile.inputs.size()];
      const auto start = Clock::now();
      bool failed = false;
      try {
        (void)correct(input);
      } catch (...) {
        failed = true;
      }
      const auto elapsed = std::chrono::duration_cast<Duration>(Clock::now() - start);
      std::lock_guard guard(lock);
      if (failed) {
        ++result.errors;
      } else if (elapsed > profile.timeout) {
        ++result.timeouts;
        result.samples.push_back(profile.timeout);
      } else {
        ++result.ok;
        result.samples.push_back(elapsed);
      }
    }
  };
  const auto n_threads = std::min(profile.concurrency, std::max<std::size_t>(count, 1));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return result;
}

}  // namespace

double to_ms(Duration d) { return std::chrono::duration<double, std::milli>(d).count(); }

Duration percentile(std::span<const Duration> samples, double q) {
  if (samples.empty()) throw Error("percentile of an empty sample set");
  if (!(q > 0.0 && q <= 100.0)) throw Error("percentile q must lie in (0, 100]");
  std::vector<Duration> sorted(samples.begin(), samples.end());
  const auto n = sorted.size();
  // Rank computed in long double; q*n/100 is exact for integral q at these n.
  auto rank = static_cast<std::size_t>(std::ceil(static_cast<long double>(q) * n / 100.0L));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

void LoadProfile::validate() const {
  if (concurrency < 1) throw Error("concurrency must be at least 1");
  if (total_requests <= warmup_requests) throw Error("total_requests must exceed warmup_requests");
  if (inputs.empty()) throw Error("load profile has no inputs");
  if (timeout <= Duration::zero()) throw Error("timeout must be positive");
}

LatencyReport run_load(const CorrectFn& correct, const LoadProfile& profile) {
  profile.validate();
  if (profile.warmup_requests > 0) run_phase(correct, profile, 0, profile.warmup_requests);

  const auto measured = profile.total_requests - profile.warmup_requests;
  const auto start = Clock::now();
  auto phase = run_phase(correct, profile, profile.warmup_requests, measured);
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();

  LatencyReport report;
  report.samples = std::move(phase.samples);
  report.completed = phase.ok;
  report.timeout_count = phase.timeouts;
  report.error_count = phase.errors;
  report.elapsed_seconds = elapsed;
  report.tps = elapsed > 0.0 ? static_cast<double>(phase.ok) / elapsed : 0.0;
  if (!report.samples.empty()) {
    report.p50 = percentile(report.samples, 50);
    report.p99 = percentile(report.samples, 99);
  }
  return report;
}

std::string Comparison::render_ratio() const {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "+%.1fx", tps_ratio);
  return buffer;
}

Comparison compare(const LatencyReport& student, const LatencyReport& teacher) {
  if (teacher.p99 <= Duration::zero()) throw Error("teacher p99 must be positive");
  if (!(teacher.tps > 0.0)) throw Error("teacher throughput must be positive");
  Comparison c;
  const double t = to_ms(teacher.p99);
  c.p99_improvement_pct = 100.0 * (t - to_ms(student.p99)) / t;
  c.tps_ratio = student.tps / teacher.tps;
  return c;
}

nlohmann::ordered_json to_json(const LatencyReport& r) {
  nlohmann::ordered_json j;
  j["p50_ms"] = to_ms(r.p50);
  j["p99_ms"] = to_ms(r.p99);
  j["tps"] = r.tps;
  j["completed"] = r.completed;
  j["timeout_count"] = r.timeout_count;
  j["error_count"] = r.error_count;
  j["elapsed_seconds"] = r.elapsed_seconds;
  j["sample_count"] = r.samples.size();
  return j;
}

nlohmann::ordered_json to_json(const Comparison& c) {
  nlohmann::ordered_json j;
  j["p99_improvement_pct"] = std::round(c.p99_improvement_pct * 10.0) / 10.0;
  j["tps_ratio"] = c.tps_ratio;
  j["tps_ratio_rendered"] = c.render_ratio();
  return j;
}

std::string samples_csv(const LatencyReport& report) {
  std::ostringstream out;
  out << "latency_ms\n";
  for (const auto& s : report.samples) out << to_ms(s) << '\n';
  return out.str();
}

}  // namespace spellkd::bench
