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

#include "spellkd/pipeline.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "spellkd/bench.hpp"
#include "spellkd/eval.hpp"
#include "spellkd/model/model.hpp"
#include "spellkd/rng.hpp"
#include "spellkd/text.hpp"

namespace spellkd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

LocaleSource parse_source(const json& j, const fs::path& base) {
  LocaleSource s;
  s.locale = Locale::parse(j.at("locale").get<std::string>());
  s.corpus = base / j.at("corpus").get<std::string>();
  return s;
}

ModelRecipe parse_recipe(const json& j, const char* default_preset) {
  ModelRecipe r;
  if (j.contains("tokenizer")) {
    const auto& t = j["tokenizer"];
    r.tokenizer.scheme = parse_scheme(t.value("scheme", std::string("bbpe")));
    r.tokenizer.vocab_size = t.value("vocab_size", r.tokenizer.scheme == Scheme::bbpe ? kDeskBbpe.vocab_size
                                                                                      : kDeskBpe.vocab_size);
  }
  json model = j.value("model", json::object());
  if (!model.contains("preset")) model["preset"] = default_preset;
  r.model = model_config_with_preset(model);
  r.train = train_config_from_json(j.value("train", json::object()));
  return r;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<std::string> inputs_of(const Dataset& d) {
  std::vector<std::string> out;
  for (const auto& p : d.pairs()) out.push_back(p.input);
  return out;
}

// Remembers teacher outputs so a (teacher, corpus) pair is decoded once.
std::shared_ptr<const Teacher> memoized(std::shared_ptr<const Teacher> inner) {
  auto cache = std::make_shared<std::map<std::uint64_t, std::vector<std::string>>>();
  auto fn = [inner, cache](std::span<const std::string> inputs) {
    std::uint64_t key = fnv1a("");
    for (const auto& s : inputs) key = fnv1a(s, fnv1a(std::string_view("\n", 1), key));
    auto it = cache->find(key);
    if (it == cache->end()) it = cache->emplace(key, inner->correct(inputs)).first;
    return it->second;
  };
  return std::make_shared<Teacher>(Teacher{inner->id, std::move(fn)});
}

struct LocaleData {
  std::vector<std::string> train_sentences;
  Dataset train, dev, test, distill;
};

std::string serialize_pairs(const Dataset& d) {
  std::string out;
  for (const auto& p : d.pairs()) out += p.input + '\t' + p.label + '\t' + p.locale.str() + '\n';
  return out;
}

ordered_json report_json(const EvalReport& r) {
  ordered_json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["n_sys_auto"] = r.n_sys_auto;
  j["n_gold_auto"] = r.n_gold_auto;
  j["n_match"] = r.n_match;
  return j;
}

ordered_json localized_json(const LocalizedReport& r) {
  ordered_json j = report_json(r.overall);
  auto& per = j["per_locale"] = ordered_json::object();
  for (const auto& [loc, rep] : r.per_locale) per[loc] = report_json(rep);
  return j;
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

}  // namespace

ModelConfig model_config_with_preset(const json& j) {
  json merged = json::object();
  if (j.contains("preset")) {
    const auto preset = to_json(model_preset(j.at("preset").get<std::string>(), 16));
    for (const auto& [k, v] : preset.items()) merged[k] = v;
  }
  for (const auto& [k, v] : j.items()) {
    if (k != "preset") merged[k] = v;
  }
  return model_config_from_json(merged);
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base) {
  ExperimentConfig c;
  c.raw = j;
  c.name = j.value("name", c.name);
  c.seed = j.value("seed", c.seed);
  for (const auto& s : j.at("locales")) c.locales.push_back(parse_source(s, base));
  for (const auto& s : j.value("added_locales", json::array())) c.added_locales.push_back(parse_source(s, base));
  if (j.contains("splits")) {
    const auto& s = j["splits"];
    c.test_sentences = s.value("test_sentences", c.test_sentences);
    c.test_pairs = s.value("test_pairs", c.test_pairs);
    c.dev_sentences = s.value("dev_sentences", c.dev_sentences);
    c.dev_pairs = s.value("dev_pairs", c.dev_pairs);
    c.min_words = s.value("min_words", c.min_words);
  }
  if (j.contains("noise")) c.noise = noise_spec_from_json(j["noise"]);
  const json teachers = j.value("teachers", json::object());
  c.multilingual_teacher = parse_recipe(teachers.value("multilingual", json::object()), "teacher_desk");
  c.monolingual_teacher = parse_recipe(teachers.value("monolingual", json::object()), "teacher_desk");
  c.student = parse_recipe(j.value("student", json::object()), "student_desk");
  if (j.contains("distill")) {
    const auto& d = j["distill"];
    if (d.contains("variants")) {
      c.variants.clear();
      for (const auto& v : d["variants"]) c.variants.push_back(parse_distill_variant(v.get<std::string>()));
    }
    c.distill_copies = d.value("copies", c.distill_copies);
    if (d.contains("cap_per_locale") && !d["cap_per_locale"].is_null()) {
      c.cap_per_locale = d["cap_per_locale"].get<std::size_t>();
    }
  }
  c.workers = j.value("workers", c.workers);
  if (j.contains("bench")) {
    const auto& b = j["bench"];
    c.bench = b.value("enabled", c.bench);
    c.bench_requests = b.value("requests", c.bench_requests);
    c.bench_concurrency = b.value("concurrency", c.bench_concurrency);
    c.bench_timeout_ms = b.value("timeout_ms", c.bench_timeout_ms);
    c.bench_warmup = b.value("warmup", c.bench_warmup);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

void ExperimentConfig::validate() const {
  if (locales.empty()) throw Error("config lists no locales");
  std::map<Locale, int> seen;
  for (const auto* group : {&locales, &added_locales}) {
    for (const auto& s : *group) {
      if (++seen[s.locale] > 1) throw Error("locale " + s.locale.str() + " listed more than once");
      if (!fs::exists(s.corpus)) throw Error("corpus not found: " + s.corpus.string());
    }
  }
  if (test_pairs > test_sentences || dev_pairs > dev_sentences) throw Error("more pairs requested than sentences");
  if (distill_copies < 1) throw Error("distill copies must be positive");
  if (variants.empty()) throw Error("no distillation variants requested");
  noise.validate();
}

PipelineResult run_pipeline(const ExperimentConfig& config, const fs::path& run_dir, const PipelineOptions& options) {
  const auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  const std::uint64_t seed = options.seed.value_or(config.seed);
  std::string stage = "setup";
  try {
    fs::create_directories(run_dir);
    for (const char* sub : {"data", "tokenizers", "teachers", "students"}) fs::create_directories(run_dir / sub);
    {
      ordered_json snap;
      snap["tool_version"] = kToolVersion;
      snap["seed"] = seed;
      snap["config"] = config.raw;
      write_json(run_dir / "config.json", snap);
    }

    std::vector<LocaleSource> all_sources = config.locales;
    all_sources.insert(all_sources.end(), config.added_locales.begin(), config.added_locales.end());
    std::vector<Locale> originals;
    for (const auto& s : config.locales) originals.push_back(s.locale);
    std::sort(originals.begin(), originals.end());

    // Noise: splits and noised pairs per locale.
    stage = "noise";
    log("[noise] building splits");
    std::map<Locale, LocaleData> data;
    for (const auto& src : all_sources) {
      const auto loc = src.locale.str();
      auto sentences = load_lines(src.corpus);
      std::erase_if(sentences, [](const std::string& s) { return text::strip(s).empty(); });
      if (sentences.size() <= config.test_sentences + config.dev_sentences) {
        throw Error("corpus for " + loc + " has only " + std::to_string(sentences.size()) + " sentences");
      }
      Rng rng(derive_seed(seed, "split/" + loc));
      shuffle(sentences.begin(), sentences.end(), rng);
      const auto test_end = sentences.begin() + static_cast<std::ptrdiff_t>(config.test_sentences);
      const auto dev_end = test_end + static_cast<std::ptrdiff_t>(config.dev_sentences);
      const std::vector<std::string> test_s(sentences.begin(), test_end), dev_s(test_end, dev_end);
      LocaleData d;
      d.train_sentences.assign(dev_end, sentences.end());
      const Alphabet alphabet = build_alphabet(d.train_sentences);
      const auto spec_for = [&](const std::string& name) {
        NoiseSpec spec = config.noise;
        spec.seed = derive_seed(seed, "noise/" + name + "/" + loc);
        return spec;
      };
      d.train = generate_training(d.train_sentences, spec_for("train"), alphabet, src.locale);
      d.dev = generate_eval(dev_s, spec_for("dev"), alphabet, config.dev_pairs, config.min_words, src.locale);
      d.test = generate_eval(test_s, spec_for("test"), alphabet, config.test_pairs, config.min_words, src.locale);
      NoiseSpec distill_spec = spec_for("distill");
      distill_spec.train_copies = config.distill_copies;
      d.distill = generate_training(d.train_sentences, distill_spec, alphabet, src.locale);
      const auto dir = run_dir / "data" / loc;
      fs::create_directories(dir);
      d.train.set_source(src.corpus.filename().string());
      save_pairs(d.train, dir / "train.jsonl");
      save_pairs(d.dev, dir / "dev.jsonl");
      save_pairs(d.test, dir / "test.jsonl");
      save_pairs(d.distill, dir / "distill_inputs.jsonl");
      data.emplace(src.locale, std::move(d));
    }

    // Tokenizers for the teachers.
    stage = "tokenizers";
    log("[tokenizers] training teacher tokenizers");
    std::map<std::string, std::shared_ptr<const TokenizerModel>> tokenizers;
    const auto train_tok = [&](const std::string& name, const std::vector<std::string>& corpus,
                               const TokenizerSettings& settings) {
      auto tok = std::make_shared<TokenizerModel>(train_subword(corpus, settings.scheme, settings.vocab_size));
      tok->save(run_dir / "tokenizers" / (name + ".tok"));
      tokenizers[name] = tok;
      return tok;
    };
    {
      std::vector<std::string> corpus;
      for (const auto& loc : originals) {
        const auto& s = data.at(loc).train_sentences;
        corpus.insert(corpus.end(), s.begin(), s.end());
      }
      train_tok("multilingual", corpus, config.multilingual_teacher.tokenizer);
      for (const auto& src : all_sources) {
        train_tok("mono_" + src.locale.str(), data.at(src.locale).train_sentences, config.monolingual_teacher.tokenizer);
      }
    }

    // Teachers.
    stage = "teachers";
    std::map<std::string, std::shared_ptr<const Checkpoint>> teachers;
    const auto train_model = [&](const std::string& label, const Dataset& train_data, const ModelRecipe& recipe,
                                 std::shared_ptr<const TokenizerModel> tok, const std::string& seed_name,
                                 const fs::path& ckpt_path, const fs::path& tok_ref) {
      ModelConfig mcfg = recipe.model;
      mcfg.vocab_size = static_cast<int>(tok->vocab_size());
      TrainConfig tcfg = recipe.train;
      tcfg.seed = derive_seed(seed, seed_name);
      TrainOptions opts;
      opts.on_epoch = [&](const EpochLog& e) {
        std::ostringstream msg;
        msg << "[" << stage << "] " << label << " epoch " << e.epoch << " step " << e.step << " loss " << e.mean_loss;
        log(msg.str());
      };
      auto ckpt = std::make_shared<Checkpoint>(train(train_data, std::move(tok), mcfg, tcfg, opts));
      ckpt->tokenizer_path = tok_ref;
      save_checkpoint(*ckpt, ckpt_path);
      return ckpt;
    };
    {
      Dataset multi_train;
      for (const auto& loc : originals) multi_train.append(data.at(loc).train);
      log("[teachers] multilingual on " + std::to_string(multi_train.size()) + " pairs");
      teachers["multilingual"] =
          train_model("multilingual", multi_train, config.multilingual_teacher, tokenizers.at("multilingual"),
                      "teacher/multilingual", run_dir / "teachers" / "multilingual.ckpt",
                      fs::path("..") / "tokenizers" / "multilingual.tok");
      for (const auto& src : all_sources) {
        const auto name = "mono_" + src.locale.str();
        log("[teachers] " + name);
        teachers[name] = train_model(name, data.at(src.locale).train, config.monolingual_teacher, tokenizers.at(name),
                                     "teacher/" + src.locale.str(), run_dir / "teachers" / (name + ".ckpt"),
                                     fs::path("..") / "tokenizers" / (name + ".tok"));
      }
    }
    std::map<std::string, std::shared_ptr<const Teacher>> teacher_fns;
    for (const auto& [name, ckpt] : teachers) {
      teacher_fns[name] = memoized(checkpoint_teacher(ckpt, "teachers/" + name + ".ckpt", config.workers));
    }
    const auto entry_for = [&](const std::string& name, const Locale& loc) {
      return TeacherEntry{loc, teacher_fns.at(name),
                          name == "multilingual" ? TeacherKind::multilingual : TeacherKind::monolingual, std::nullopt};
    };

    // Best-teacher selection on the dev splits.
    stage = "select";
    log("[select] scoring candidates on dev");
    std::map<Locale, std::vector<TeacherEntry>> candidates;
    std::map<Locale, Dataset> dev_sets;
    for (const auto& loc : originals) {
      candidates[loc] = {entry_for("mono_" + loc.str(), loc), entry_for("multilingual", loc)};
      dev_sets[loc] = data.at(loc).dev;
    }
    const TeacherRegistry best = select_best_teacher(candidates, dev_sets);
    ordered_json selection = ordered_json::object();
    for (const auto& [loc, entry] : best.entries()) {
      selection[loc.str()] = {{"teacher", entry.teacher->id}, {"kind", to_string(entry.kind)},
                              {"dev_f1", round6(*entry.dev_f1)}};
    }
    write_json(run_dir / "selection.json", selection);

    // Student data for each variant.
    stage = "student-data";
    std::map<Locale, Dataset> inputs;
    for (const auto& loc : originals) inputs[loc] = data.at(loc).distill;
    std::vector<std::pair<std::string, StudentData>> student_sets;
    const auto save_student_data = [&](const std::string& name, const StudentData& sd, const ordered_json* plan) {
      const auto dir = run_dir / "students" / name;
      fs::create_directories(dir);
      save_pairs(sd.data, dir / "data.jsonl");
      write_json(provenance_path(dir / "data.jsonl"), provenance_to_json(sd, name));
      if (plan) write_json(dir / "plan.json", *plan);
    };
    for (const auto variant : config.variants) {
      DistillPlan plan;
      plan.variant = variant;
      plan.input_corpora = inputs;
      plan.cap_per_locale = config.cap_per_locale;
      for (const auto& loc : originals) {
        switch (variant) {
          case DistillVariant::single_multilingual: plan.registry.add(entry_for("multilingual", loc)); break;
          case DistillVariant::matched_monolingual: plan.registry.add(entry_for("mono_" + loc.str(), loc)); break;
          case DistillVariant::best_teacher: plan.registry.add(best.at(loc)); break;
        }
      }
      const auto name = std::string(to_string(variant));
      log("[student-data] " + name);
      StudentData sd = assemble_student_data(plan);
      const auto plan_json = to_json(plan);
      save_student_data(name, sd, &plan_json);
      student_sets.emplace_back(name, std::move(sd));
    }
    const bool extend = !config.added_locales.empty() &&
                        std::find(config.variants.begin(), config.variants.end(), DistillVariant::best_teacher) !=
                            config.variants.end();
    std::vector<Locale> added;
    if (extend) {
      StudentData grown;
      for (const auto& [name, sd] : student_sets) {
        if (name == "best_teacher") grown = sd;
      }
      for (const auto& src : config.added_locales) {
        auto entry = entry_for("mono_" + src.locale.str(), src.locale);
        entry.dev_f1 = dev_f1(*entry.teacher, data.at(src.locale).dev);
        Dataset new_inputs = data.at(src.locale).distill;
        if (config.cap_per_locale && new_inputs.size() > *config.cap_per_locale) {
          Dataset capped;
          for (std::size_t i = 0; i < *config.cap_per_locale; ++i) capped.add(new_inputs[i]);
          new_inputs = std::move(capped);
        }
        grown = add_language(grown, entry, new_inputs);
        added.push_back(src.locale);
      }
      log("[student-data] best_teacher_extended");
      save_student_data("best_teacher_extended", grown, nullptr);
      student_sets.emplace_back("best_teacher_extended", std::move(grown));
    }

    // Students. Identical training data gives an identical student, so it
    // is trained once.
    stage = "students";
    std::map<std::string, std::shared_ptr<const Checkpoint>> students;
    std::map<std::string, std::string> same_as;
    std::map<std::uint64_t, std::string> by_hash;
    for (const auto& [name, sd] : student_sets) {
      const Dataset tagged = with_locale_tags(sd.data);
      const auto hash = fnv1a(serialize_pairs(tagged));
      if (const auto it = by_hash.find(hash); it != by_hash.end()) {
        log("[students] " + name + " has the same data as " + it->second);
        students[name] = students.at(it->second);
        same_as[name] = it->second;
        continue;
      }
      std::vector<std::string> corpus;
      for (const auto& p : tagged.pairs()) {
        corpus.push_back(p.input);
        corpus.push_back(p.label);
      }
      const auto tok_name = "student_" + name;
      auto tok = train_tok(tok_name, corpus, config.student.tokenizer);
      log("[students] " + name + " on " + std::to_string(tagged.size()) + " pairs");
      students[name] = train_model(name, tagged, config.student, tok, "student",
                                   run_dir / "students" / name / "model.ckpt",
                                   fs::path("..") / ".." / "tokenizers" / (tok_name + ".tok"));
      by_hash.emplace(hash, name);
    }

    // Evaluation report.
    stage = "evaluate";
    log("[evaluate] scoring on test splits");
    const auto evaluate_system = [&](const std::function<std::vector<std::string>(const Dataset&)>& run,
                                     const std::vector<Locale>& locales) {
      std::vector<EvalRow> sys, gold;
      for (const auto& loc : locales) {
        const auto& test = data.at(loc).test;
        const auto outputs = run(test);
        for (std::size_t i = 0; i < test.size(); ++i) {
          sys.push_back({test[i].input, outputs[i], loc.str()});
          gold.push_back({test[i].input, test[i].label, loc.str()});
        }
      }
      return evaluate_rows(sys, gold);
    };
    const auto teacher_run = [&](const std::string& name) {
      return [&, name](const Dataset& test) { return teacher_fns.at(name)->correct(inputs_of(test)); };
    };
    const auto student_run = [&](const std::string& name) {
      return [&, name](const Dataset& test) {
        auto fn = checkpoint_teacher(students.at(name), name, config.workers);
        return fn->correct(inputs_of(with_locale_tags(test)));
      };
    };

    ordered_json report;
    report["name"] = config.name;
    report["tool_version"] = kToolVersion;
    report["seed"] = seed;
    report["locales"] = ordered_json::array();
    for (const auto& loc : originals) report["locales"].push_back(loc.str());
    report["selection"] = selection;

    auto& teacher_section = report["teachers"] = ordered_json::object();
    teacher_section["multilingual"] = localized_json(evaluate_system(teacher_run("multilingual"), originals));
    for (const auto& src : all_sources) {
      const auto name = "mono_" + src.locale.str();
      teacher_section[name] = localized_json(evaluate_system(teacher_run(name), {src.locale}));
    }

    auto& variant_section = report["variants"] = ordered_json::object();
    std::map<std::string, LocalizedReport> variant_reports;
    for (const auto variant : config.variants) {
      const auto name = std::string(to_string(variant));
      const auto rep = evaluate_system(student_run(name), originals);
      variant_reports[name] = rep;
      auto j = localized_json(rep);
      if (same_as.contains(name)) j["same_student_as"] = same_as.at(name);
      variant_section[name] = std::move(j);
    }
    if (variant_reports.contains("single_multilingual")) {
      auto& deltas = report["relative_to_single_multilingual"] = ordered_json::object();
      const auto& base = variant_reports.at("single_multilingual").overall;
      for (const auto& [name, rep] : variant_reports) {
        deltas[name] = base.f1 > 0.0 ? ordered_json(format_delta(relative_delta(rep.overall, base))) : ordered_json();
      }
    }
    if (extend) {
      std::vector<Locale> all_locs = originals;
      all_locs.insert(all_locs.end(), added.begin(), added.end());
      std::sort(all_locs.begin(), all_locs.end());
      const auto rep = evaluate_system(student_run("best_teacher_extended"), all_locs);
      auto& ext = report["add_language"] = ordered_json::object();
      ext["added"] = ordered_json::array();
      for (const auto& loc : added) ext["added"].push_back(loc.str());
      ext["student"] = localized_json(rep);
      auto& change = ext["original_f1_change_points"] = ordered_json::object();
      const auto& before = variant_reports.at("best_teacher");
      for (const auto& loc : originals) {
        change[loc.str()] =
            round6(100.0 * (rep.per_locale.at(loc.str()).f1 - before.per_locale.at(loc.str()).f1));
      }
    }
    write_json(run_dir / "report.json", report);

    PipelineResult result;
    result.report = report;

    // Latency comparison.
    if (config.bench && students.contains("best_teacher")) {
      stage = "bench";
      log("[bench] best_teacher student vs multilingual teacher");
      std::vector<std::string> raw, tagged;
      for (const auto& loc : originals) {
        for (const auto& p : data.at(loc).test.pairs()) {
          raw.push_back(p.input);
          tagged.push_back(tag_input(loc, p.input));
        }
      }
      bench::LoadProfile profile;
      profile.total_requests = config.bench_requests;
      profile.concurrency = config.bench_concurrency;
      profile.timeout = std::chrono::milliseconds(config.bench_timeout_ms);
      profile.warmup_requests = config.bench_warmup;
      const auto corrector = [](std::shared_ptr<const Checkpoint> ckpt) {
        return [ckpt](std::string_view s) { return decode_greedy(*ckpt, s, default_max_len(*ckpt, s)).text; };
      };
      profile.inputs = raw;
      const auto teacher_lat = bench::run_load(corrector(teachers.at("multilingual")), profile);
      profile.inputs = tagged;
      const auto student_lat = bench::run_load(corrector(students.at("best_teacher")), profile);
      ordered_json b;
      b["teacher"] = bench::to_json(teacher_lat);
      b["student"] = bench::to_json(student_lat);
      b["comparison"] = bench::to_json(bench::compare(student_lat, teacher_lat));
      write_json(run_dir / "bench.json", b);
      result.bench = b;
    }
    log("[done] report at " + (run_dir / "report.json").string());
    return result;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace spellkd
