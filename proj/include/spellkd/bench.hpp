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

#pragma once

#include <chrono>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace spellkd::bench {

using Duration = std::chrono::nanoseconds;

// Nearest-rank percentile: the element at index ceil(q * n / 100) - 1 of the
// ascending order. q must lie in (0, 100].
Duration percentile(std::span<const Duration> samples, double q);

struct LoadProfile {
  std::size_t total_requests = 100;
  std::size_t concurrency = 1;
  Duration timeout = std::chrono::seconds(1);
  std::size_t warmup_requests = 0;
  std::vector<std::string> inputs;

  void validate() const;
};

struct LatencyReport {
  Duration p50{};
  Duration p99{};
  double tps = 0.0;
  std::size_t completed = 0;
  std::size_t timeout_count = 0;
  std::size_t error_count = 0;
  double elapsed_seconds = 0.0;
  std::vector<Duration> samples;  // measured requests in completion order
};

using CorrectFn = std::function<std::string(std::string_view)>;

// Runs the warmup requests, then the measured ones, each phase with up to
// `concurrency` requests in flight. A request slower than the timeout is
// counted as a timeout and sampled at the timeout value; a request that
// throws is counted as an error and not sampled. tps counts requests that
// finished in time.
LatencyReport run_load(const CorrectFn& correct, const LoadProfile& profile);

struct Comparison {
  double p99_improvement_pct = 0.0;
  double tps_ratio = 0.0;

  std::string render_ratio() const;  // "+2.1x"
};

Comparison compare(const LatencyReport& student, const LatencyReport& teacher);

nlohmann::ordered_json to_json(const LatencyReport& report);
nlohmann::ordered_json to_json(const Comparison& comparison);

// One sample per line in milliseconds.
std::string samples_csv(const LatencyReport& report);

double to_ms(Duration d);

}  // namespace spellkd::bench
