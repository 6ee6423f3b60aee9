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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "spellkd/bench.hpp"
#include "spellkd/corpus.hpp"
#include "spellkd/distill.hpp"
#include "spellkd/eval.hpp"
#include "spellkd/model/model.hpp"
#include "spellkd/noise.hpp"
#include "spellkd/pipeline.hpp"
#include "spellkd/text.hpp"
#include "spellkd/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace spellkd;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + " is not valid JSON: " + e.what());
  }
}

void emit(const ordered_json& j, const std::string& output) {
  if (output.empty() || output == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(output, std::ios::binary);
  if (!out) throw Error("cannot write " + output);
  out << j.dump(2) << '\n';
}

// Plain lines, or the `input` field of JSONL records.
std::vector<std::string> read_inputs(const fs::path& path) {
  if (path.extension() == ".jsonl") {
    std::vector<std::string> out;
    for (const auto& row : load_eval_rows(path.string())) out.push_back(row.input);
    return out;
  }
  auto lines = load_lines(path);
  std::erase_if(lines, [](const std::string& s) { return text::strip(s).empty(); });
  return lines;
}

std::shared_ptr<const Checkpoint> load_shared(const fs::path& path) {
  return std::make_shared<Checkpoint>(load_checkpoint(path));
}

struct NoiseArgs {
  std::string input, output, locale, noise_file, mode = "train", format = "jsonl";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t target_count = 10000;
  std::size_t min_words = 6;
};

int run_inject_noise(const NoiseArgs& a) {
  NoiseSpec spec = a.noise_file.empty() ? NoiseSpec{} : noise_spec_from_json(read_json(a.noise_file));
  if (a.seed_set) spec.seed = a.seed;
  const auto locale = Locale::parse(a.locale);
  auto corpus = load_lines(a.input);
  std::erase_if(corpus, [](const std::string& s) { return text::strip(s).empty(); });
  const auto alphabet = build_alphabet(corpus);
  Dataset out = a.mode == "eval"
                    ? generate_eval(corpus, spec, alphabet, a.target_count, a.min_words, locale)
                    : generate_training(corpus, spec, alphabet, locale);
  out.set_source(fs::path(a.input).filename().string());
  out.set_seed(spec.seed);
  save_pairs(out, a.output, parse_pair_format(a.format));
  std::cerr << "wrote " << out.size() << " pairs to " << a.output << '\n';
  return 0;
}

struct TokenizerArgs {
  std::string input, output, scheme = "bbpe";
  std::size_t vocab_size = 0;
  bool tag_locales = false;
};

int run_train_tokenizer(const TokenizerArgs& a) {
  const auto scheme = parse_scheme(a.scheme);
  std::size_t vocab = a.vocab_size;
  if (vocab == 0) vocab = scheme == Scheme::bbpe ? kDeskBbpe.vocab_size : kDeskBpe.vocab_size;
  std::vector<std::string> corpus;
  if (fs::path(a.input).extension() == ".jsonl") {
    const auto data = load_pairs(a.input);
    for (const auto& p : data.pairs()) {
      corpus.push_back(a.tag_locales ? tag_input(p.locale, p.input) : p.input);
      corpus.push_back(p.label);
    }
  } else {
    corpus = read_inputs(a.input);
  }
  const auto tok = train_subword(corpus, scheme, vocab);
  tok.save(a.output);
  std::cerr << "vocabulary " << tok.vocab_size() << ", " << tok.merges().size() << " merges\n";
  return 0;
}

struct TrainArgs {
  std::string data, tokenizer, output, preset = "teacher_desk", model_json, train_json;
  bool tag_locales = false;
  TrainConfig train;
};

int run_train(const TrainArgs& a) {
  auto tok = std::make_shared<TokenizerModel>(TokenizerModel::load(a.tokenizer));
  json model = a.model_json.empty() ? json::object() : read_json(a.model_json);
  if (!model.contains("preset")) model["preset"] = a.preset;
  ModelConfig mcfg = model_config_with_preset(model);
  mcfg.vocab_size = static_cast<int>(tok->vocab_size());
  TrainConfig tcfg = a.train;
  if (!a.train_json.empty()) tcfg = train_config_from_json(read_json(a.train_json));
  Dataset data = load_pairs(a.data);
  if (a.tag_locales) data = with_locale_tags(data);
  TrainOptions opts;
  opts.on_epoch = [](const EpochLog& e) {
    std::cerr << "epoch " << e.epoch << " step " << e.step << " loss " << e.mean_loss << '\n';
  };
  try {
    auto ckpt = train(data, tok, mcfg, tcfg, opts);
    ckpt.tokenizer_path = fs::absolute(a.tokenizer);
    save_checkpoint(ckpt, a.output);
  } catch (const TrainingDiverged& e) {
    auto last = e.last_good();
    last.tokenizer_path = fs::absolute(a.tokenizer);
    const auto path = a.output + ".last_good";
    save_checkpoint(last, path);
    std::cerr << e.what() << "; last good checkpoint saved to " << path << '\n';
    return 3;
  }
  return 0;
}

struct DistillArgs {
  std::string plan, output;
  std::size_t cap = 0;
  unsigned workers = 1;
};

// Plan file: {"variant", "entries": [{"locale", "checkpoint", "kind"}],
// "inputs": {locale: path}, optional "existing": path to grow with add_language}.
int run_distill_generate(const DistillArgs& a) {
  const auto j = read_json(a.plan);
  const auto base = fs::path(a.plan).parent_path();
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  std::map<std::string, std::shared_ptr<const Teacher>> teachers;
  const auto teacher_for = [&](const std::string& path) {
    auto& t = teachers[path];
    if (!t) t = checkpoint_teacher(load_shared(resolve(path)), path, a.workers);
    return t;
  };
  std::vector<TeacherEntry> entries;
  for (const auto& e : j.at("entries")) {
    TeacherEntry entry;
    entry.locale = Locale::parse(e.at("locale").get<std::string>());
    entry.teacher = teacher_for(e.at("checkpoint").get<std::string>());
    entry.kind = parse_teacher_kind(e.value("kind", std::string("monolingual")));
    if (e.contains("dev_f1")) entry.dev_f1 = e["dev_f1"].get<double>();
    entries.push_back(std::move(entry));
  }
  const auto inputs_for = [&](const Locale& loc) {
    const auto& in = j.at("inputs");
    if (!in.contains(loc.str())) throw Error("plan has no inputs for locale " + loc.str());
    Dataset d = load_pairs(resolve(in[loc.str()].get<std::string>()));
    Dataset out;
    for (const auto& p : d.pairs()) {
      if (a.cap && out.size() >= a.cap) break;
      out.add(ExamplePair{p.input, p.label, loc});
    }
    return out;
  };

  StudentData result;
  std::string variant = j.value("variant", std::string("best_teacher"));
  if (j.contains("existing")) {
    result.data = load_pairs(resolve(j["existing"].get<std::string>()));
    for (const auto& entry : entries) result = add_language(result, entry, inputs_for(entry.locale));
    variant += "+added";
  } else {
    DistillPlan plan;
    plan.variant = parse_distill_variant(variant);
    for (auto& entry : entries) {
      plan.input_corpora[entry.locale] = inputs_for(entry.locale);
      plan.registry.add(std::move(entry));
    }
    if (a.cap) plan.cap_per_locale = a.cap;
    result = assemble_student_data(plan);
  }
  save_pairs(result.data, a.output);
  std::ofstream(provenance_path(a.output), std::ios::binary) << provenance_to_json(result, variant).dump(2) << '\n';
  for (const auto& s : result.provenance) {
    std::cerr << s.locale.str() << ": " << s.count << " pairs from " << s.teacher << '\n';
  }
  return 0;
}

struct SelectArgs {
  std::string candidates, output;
  unsigned workers = 1;
};

// Candidates file: {"candidates": {locale: [{"checkpoint", "kind"}]}, "dev": {locale: path}}.
int run_select_best(const SelectArgs& a) {
  const auto j = read_json(a.candidates);
  const auto base = fs::path(a.candidates).parent_path();
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  std::map<std::string, std::shared_ptr<const Teacher>> teachers;
  std::map<Locale, std::vector<TeacherEntry>> candidates;
  for (const auto& [loc_name, list] : j.at("candidates").items()) {
    const auto loc = Locale::parse(loc_name);
    for (const auto& c : list) {
      const auto path = c.at("checkpoint").get<std::string>();
      auto& t = teachers[path];
      if (!t) t = checkpoint_teacher(load_shared(resolve(path)), path, a.workers);
      candidates[loc].push_back(TeacherEntry{loc, t, parse_teacher_kind(c.value("kind", std::string("monolingual"))),
                                             std::nullopt});
    }
  }
  std::map<Locale, Dataset> dev;
  for (const auto& [loc_name, path] : j.value("dev", json::object()).items()) {
    dev[Locale::parse(loc_name)] = load_pairs(resolve(path.get<std::string>()));
  }
  const auto registry = select_best_teacher(candidates, dev);
  ordered_json out;
  out["entries"] = ordered_json::array();
  for (const auto& [loc, entry] : registry.entries()) {
    out["entries"].push_back({{"locale", loc.str()},
                              {"checkpoint", entry.teacher->id},
                              {"kind", to_string(entry.kind)},
                              {"dev_f1", *entry.dev_f1}});
  }
  emit(out, a.output);
  return 0;
}

struct EvaluateArgs {
  std::string system, gold, output;
  bool fold_case = false;
};

int run_evaluate(const EvaluateArgs& a) {
  const auto sys = load_eval_rows(a.system);
  const auto gold = load_eval_rows(a.gold);
  emit(to_json(evaluate_rows(sys, gold, NormalizeOptions{a.fold_case})), a.output);
  return 0;
}

struct BenchArgs {
  std::string checkpoint, baseline, inputs, output, csv, tag_locale;
  std::size_t requests = 200, concurrency = 1, warmup = 10;
  int timeout_ms = 1000;
};

int run_bench(const BenchArgs& a) {
  bench::LoadProfile profile;
  profile.total_requests = a.requests;
  profile.concurrency = a.concurrency;
  profile.timeout = std::chrono::milliseconds(a.timeout_ms);
  profile.warmup_requests = a.warmup;
  profile.inputs = read_inputs(a.inputs);
  const auto corrector = [](std::shared_ptr<const Checkpoint> ckpt, std::optional<Locale> tag) {
    return [ckpt, tag](std::string_view s) {
      const std::string in = tag ? tag_input(*tag, s) : std::string(s);
      return decode_greedy(*ckpt, in, default_max_len(*ckpt, in)).text;
    };
  };
  std::optional<Locale> tag;
  if (!a.tag_locale.empty()) tag = Locale::parse(a.tag_locale);
  const auto report = bench::run_load(corrector(load_shared(a.checkpoint), tag), profile);
  ordered_json out;
  out["system"] = bench::to_json(report);
  if (!a.baseline.empty()) {
    const auto base = bench::run_load(corrector(load_shared(a.baseline), std::nullopt), profile);
    out["baseline"] = bench::to_json(base);
    out["comparison"] = bench::to_json(bench::compare(report, base));
  }
  if (!a.csv.empty()) {
    std::ofstream csv(a.csv, std::ios::binary);
    if (!csv) throw Error("cannot write " + a.csv);
    csv << bench::samples_csv(report);
  }
  emit(out, a.output);
  return 0;
}

struct PipelineArgs {
  std::string config, run_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool quiet = false;
};

int run_pipeline_cmd(const PipelineArgs& a) {
  const auto config = ExperimentConfig::load(a.config);
  PipelineOptions opts;
  if (!a.quiet) opts.log = [](const std::string& msg) { std::cerr << msg << '\n'; };
  if (a.seed_set) opts.seed = a.seed;
  const fs::path run_dir = a.run_dir.empty() ? fs::path("runs") / config.name : fs::path(a.run_dir);
  const auto result = run_pipeline(config, run_dir, opts);
  std::cout << (run_dir / "report.json").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilingual spelling correction with sequence-level distillation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  NoiseArgs noise;
  auto* cmd_noise = app.add_subcommand("inject-noise", "Create noised (input, label) pairs from clean sentences");
  cmd_noise->add_option("--input", noise.input, "Clean sentences, one per line")->required()->check(CLI::ExistingFile);
  cmd_noise->add_option("--output", noise.output, "Output pairs file")->required();
  cmd_noise->add_option("--locale", noise.locale, "Locale of the sentences")->required();
  cmd_noise->add_option("--noise", noise.noise_file, "Noise spec JSON")->check(CLI::ExistingFile);
  cmd_noise->add_option("--seed", noise.seed, "Noise seed")->each([&](const std::string&) { noise.seed_set = true; });
  cmd_noise->add_option("--mode", noise.mode, "train or eval")->check(CLI::IsMember({"train", "eval"}));
  cmd_noise->add_option("--target-count", noise.target_count, "Eval pairs to sample");
  cmd_noise->add_option("--min-words", noise.min_words, "Minimum words per eval sentence");
  cmd_noise->add_option("--format", noise.format, "jsonl or tsv")->check(CLI::IsMember({"jsonl", "tsv"}));

  TokenizerArgs tok;
  auto* cmd_tok = app.add_subcommand("train-tokenizer", "Learn a BPE or byte-level BPE vocabulary");
  cmd_tok->add_option("--input", tok.input, "Text lines, or a JSONL pairs file")->required()->check(CLI::ExistingFile);
  cmd_tok->add_option("--output", tok.output, "Tokenizer file")->required();
  cmd_tok->add_option("--scheme", tok.scheme, "bpe or bbpe")->check(CLI::IsMember({"bpe", "bbpe"}));
  cmd_tok->add_option("--vocab-size", tok.vocab_size, "Target vocabulary size (default 4096 bbpe, 8192 bpe)");
  cmd_tok->add_flag("--tag-locales", tok.tag_locales, "Prefix JSONL inputs with their locale tag");

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Train an encoder-decoder corrector");
  cmd_train->add_option("--data", tr.data, "Training pairs (JSONL)")->required()->check(CLI::ExistingFile);
  cmd_train->add_option("--tokenizer", tr.tokenizer, "Tokenizer file")->required()->check(CLI::ExistingFile);
  cmd_train->add_option("--output", tr.output, "Checkpoint path")->required();
  cmd_train->add_option("--preset", tr.preset, "Model preset")
      ->check(CLI::IsMember({"teacher_desk", "student_desk", "bart_large", "bart_6layer", "student_2layer"}));
  cmd_train->add_option("--model-config", tr.model_json, "Model config JSON (overrides the preset)");
  cmd_train->add_option("--train-config", tr.train_json, "Train config JSON (overrides the flags below)");
  cmd_train->add_option("--epochs", tr.train.epochs);
  cmd_train->add_option("--batch-size", tr.train.batch_size);
  cmd_train->add_option("--lr", tr.train.learning_rate);
  cmd_train->add_option("--warmup", tr.train.warmup_steps);
  cmd_train->add_option("--max-steps", tr.train.max_steps);
  cmd_train->add_option("--label-smoothing", tr.train.label_smoothing);
  cmd_train->add_option("--clip", tr.train.gradient_clip_norm);
  cmd_train->add_option("--seed", tr.train.seed);
  cmd_train->add_flag("--tag-locales", tr.tag_locales, "Prefix inputs with their locale tag (students)");

  DistillArgs dist;
  auto* cmd_dist = app.add_subcommand("distill-generate", "Label student inputs with teacher outputs");
  cmd_dist->add_option("--plan", dist.plan, "Distillation plan JSON")->required()->check(CLI::ExistingFile);
  cmd_dist->add_option("--output", dist.output, "Student pairs (JSONL)")->required();
  cmd_dist->add_option("--cap-per-locale", dist.cap, "Use at most this many inputs per locale");
  cmd_dist->add_option("--workers", dist.workers, "Decoding threads");

  SelectArgs sel;
  auto* cmd_sel = app.add_subcommand("select-best", "Pick the best teacher per locale on dev data");
  cmd_sel->add_option("--candidates", sel.candidates, "Candidates JSON")->required()->check(CLI::ExistingFile);
  cmd_sel->add_option("--output", sel.output, "Registry JSON (default stdout)");
  cmd_sel->add_option("--workers", sel.workers, "Decoding threads");

  EvaluateArgs ev;
  auto* cmd_eval = app.add_subcommand("evaluate", "Precision, recall and F1 of system outputs");
  cmd_eval->add_option("--system", ev.system, "System rows (JSONL)")->required()->check(CLI::ExistingFile);
  cmd_eval->add_option("--gold", ev.gold, "Gold rows (JSONL)")->required()->check(CLI::ExistingFile);
  cmd_eval->add_option("--output", ev.output, "Report path (default stdout)");
  cmd_eval->add_flag("--fold-case", ev.fold_case, "Compare case-insensitively");

  BenchArgs bn;
  auto* cmd_bench = app.add_subcommand("bench", "Latency and throughput under load");
  cmd_bench->add_option("--checkpoint", bn.checkpoint, "Checkpoint to measure")->required()->check(CLI::ExistingFile);
  cmd_bench->add_option("--baseline", bn.baseline, "Checkpoint to compare against")->check(CLI::ExistingFile);
  cmd_bench->add_option("--inputs", bn.inputs, "Request texts (lines or JSONL)")->required()->check(CLI::ExistingFile);
  cmd_bench->add_option("--requests", bn.requests);
  cmd_bench->add_option("--concurrency", bn.concurrency);
  cmd_bench->add_option("--timeout-ms", bn.timeout_ms);
  cmd_bench->add_option("--warmup", bn.warmup);
  cmd_bench->add_option("--tag-locale", bn.tag_locale, "Prefix requests to --checkpoint with this locale tag");
  cmd_bench->add_option("--csv", bn.csv, "Write per-request latencies (ms)");
  cmd_bench->add_option("--output", bn.output, "Report path (default stdout)");

  PipelineArgs pl;
  auto* cmd_pipe = app.add_subcommand("pipeline", "Run every stage from an experiment config");
  cmd_pipe->add_option("--config", pl.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  cmd_pipe->add_option("--run-dir", pl.run_dir, "Output directory (default runs/<name>)");
  cmd_pipe->add_option("--seed", pl.seed, "Override the root seed")->each([&](const std::string&) { pl.seed_set = true; });
  cmd_pipe->add_flag("--quiet", pl.quiet, "No progress output");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*cmd_noise) return run_inject_noise(noise);
    if (*cmd_tok) return run_train_tokenizer(tok);
    if (*cmd_train) return run_train(tr);
    if (*cmd_dist) return run_distill_generate(dist);
    if (*cmd_sel) return run_select_best(sel);
    if (*cmd_eval) return run_evaluate(ev);
    if (*cmd_bench) return run_bench(bn);
    if (*cmd_pipe) return run_pipeline_cmd(pl);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
