#include <set>

#include "doctest.h"
#include "json.hpp"

#include "forge/pipeline.hpp"
#include "forge/records.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::testing;
using nlohmann::json;

namespace {

PipelineConfig small_config(const std::filesystem::path& out) {
  PipelineConfig cfg;
  cfg.output_dir = out;
  cfg.seed = 7;
  cfg.synth_instances = 60;
  cfg.judge_hyper.epochs = 300;
  cfg.grpo.learning_rate = 0.3;
  cfg.grpo.batch_instances = 8;
  cfg.grpo.max_steps = 6;
  return cfg;
}

json manifest(const std::filesystem::path& path) { return json::parse(slurp(path)); }

std::size_t line_count(const std::filesystem::path& path) {
  std::istringstream in(slurp(path));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

std::string label_line(Label l) { return std::string(label_name(l)); }

std::string cli(const std::string& args) { return std::string(FORGE_CLI_PATH) + " " + args; }

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config text parsing") {
  const auto cfg = parse_config_text(
      "[run]\nseed = 42\n[grpo]\nlearning_rate = 0.3\nclip_epsilon = inf\n[distill]\nstrategy = best-of-n\n");
  CHECK(cfg.seed == 42);
  CHECK(cfg.grpo.learning_rate == 0.3);
  CHECK(std::isinf(cfg.grpo.clip_epsilon));
  CHECK(cfg.strategy == SftStrategy::kBestOfN);

  CHECK(error_of([] { parse_config_text("[grpo]\nlearning_rat = 0.3\n"); }) == ErrorCode::kConfig);
  CHECK(error_of([] { parse_config_text("[nosuch]\nx = 1\n"); }) == ErrorCode::kConfig);
  CHECK(error_of([] { parse_config_text("[grpo]\ngroup_size = eight\n"); }) == ErrorCode::kConfig);
  CHECK(error_of([] { parse_config_text("seed = 1\n"); }) == ErrorCode::kConfig);
  CHECK(error_of([] { parse_config_text("[distill]\nstrategy = best\n"); }) == ErrorCode::kConfig);
  CHECK(error_of([] { parse_config_text("[grpo]\ngroup_size = 1\n"); }) == ErrorCode::kConfig);
}

TEST_CASE("effective config round trips through the setters") {
  PipelineConfig a;
  set_config_value(a, "grpo.kl_beta", "0.05");
  set_config_value(a, "judge.kind", "oracle");
  set_config_value(a, "data.dataset", "x.jsonl");
  set_config_value(a, "mine.include_greedy", "true");
  PipelineConfig b;
  for (const auto& [k, v] : effective_config(a)) set_config_value(b, k, v);
  CHECK(effective_config(a) == effective_config(b));

  std::set<std::string> documented;
  for (const auto& d : config_reference()) {
    documented.insert(d.key);
    CHECK(!d.description.empty());
  }
  for (const auto& [k, v] : effective_config(a)) CHECK(documented.count(k) == 1);
}

TEST_CASE("output lock is exclusive") {
  TempDir dir;
  {
    OutputLock a(dir.path());
    CHECK(error_of([&] { OutputLock b(dir.path()); }) == ErrorCode::kLocked);
  }
  CHECK_NOTHROW(OutputLock(dir.path()));
}

TEST_CASE("mining yields n trajectories per instance") {
  const auto instances = synth::generate_instances(10, 1);
  const MockBackend mock;
  const SamplingConfig s{8, 0.6, 0.95, 3};
  const auto out = mine_instances(mock, instances, s, PromptTemplate::kThinking, false, 3);
  REQUIRE(out.size() == 80);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].instance_id == instances[i / 8].id);
    CHECK(out[i].sample_index == static_cast<int>(i % 8));
    CHECK(out[i].origin == TrajectoryOrigin::kTeacherSampled);
    CHECK(out[i].sampling == s);
    CHECK(out[i].token_logprobs.has_value());
  }
  const auto with_greedy = mine_instances(mock, instances, s, PromptTemplate::kThinking, true);
  CHECK(with_greedy.size() == 90);
  CHECK(with_greedy[8].origin == TrajectoryOrigin::kGreedy);
  CHECK(with_greedy[8].sampling.temperature == 0.0);

  MockOptions o;
  o.truncate_to = 5;
  const MockBackend short_mock(o);
  CHECK(error_of([&] { mine_instances(short_mock, instances, s, PromptTemplate::kThinking, false); }) ==
        ErrorCode::kTruncated);
}

TEST_CASE("prepare writes a stratified split") {
  TempDir dir;
  auto cfg = small_config(dir.path());
  const auto split = cmd_prepare(cfg);
  const StagePaths p{dir.path()};
  CHECK(line_count(p.split("train")) == split.train.size());
  CHECK(split.train.size() + split.val.size() + split.test.size() == 60);
  const auto m = manifest(p.data_manifest());
  CHECK(m["source"] == "synthetic");
  CHECK(m["command"] == "prepare");
  // Same seed, same split.
  TempDir again;
  auto cfg2 = small_config(again.path());
  CHECK(slurp(StagePaths{again.path()}.split("test")).empty());
  cmd_prepare(cfg2);
  CHECK(slurp(StagePaths{again.path()}.split("test")) == slurp(p.split("test")));
}

TEST_CASE("mine records its template and resumes only missing instances") {
  TempDir dir;
  auto cfg = small_config(dir.path());
  cfg.backend_cfg.max_parallel_requests = 4;
  cmd_mine(cfg);
  const StagePaths p{dir.path()};
  const auto split = cmd_prepare(cfg);
  const std::string full_pool = slurp(p.pool());
  CHECK(line_count(p.pool()) == split.train.size() * 8);
  auto m = manifest(p.mine_manifest());
  CHECK(m["template"] == "thinking");
  CHECK(m["resumed_instances"] == 0);
  CHECK(m["sampling"]["n"] == 8);
  CHECK(m["sampling"]["temperature"] == 0.6);
  CHECK(m["sampling"]["top_p"] == 0.95);

  // Simulate a crash after three instances, with a torn line at the end of the pool.
  std::istringstream ids(slurp(p.mine_ledger()));
  std::string ledger, id;
  for (int i = 0; i < 3 && std::getline(ids, id); ++i) ledger += id + "\n";
  spit(p.mine_ledger(), ledger);
  std::istringstream pool_lines(full_pool);
  std::string partial, line;
  for (int i = 0; i < 24 + 5 && std::getline(pool_lines, line); ++i) partial += line + "\n";
  partial += line.substr(0, line.size() / 2);
  spit(p.pool(), partial);

  cmd_mine(cfg);
  m = manifest(p.mine_manifest());
  CHECK(m["resumed_instances"] == 3);
  CHECK(slurp(p.pool()) == full_pool);

  TempDir other;
  auto icfg = small_config(other.path());
  icfg.prompt_template = PromptTemplate::kInstruct;
  cmd_mine(icfg);
  CHECK(manifest(StagePaths{other.path()}.mine_manifest())["template"] == "instruct");
  for (const auto& t : read_records_as<Trajectory>(StagePaths{other.path()}.pool())) {
    CHECK(t.raw_text.find("<think>") == std::string::npos);
  }
}

TEST_CASE("distill, judge-train, grpo and eval end to end") {
  TempDir dir;
  auto cfg = small_config(dir.path());
  const StagePaths p{dir.path()};
  cmd_mine(cfg);
  cmd_distill(cfg);

  const auto dm = manifest(p.distill_manifest());
  CHECK(dm["selection"]["emitted"] == line_count(p.sft()));
  CHECK(dm["judge_dataset"]["total"] == line_count(p.judge_dataset()));
  CHECK(dm["strategy"] == "diverse");
  const auto sft = read_records_as<SftExample>(p.sft());
  for (const auto& ex : sft) CHECK(ex.strategy_tag == SftStrategy::kDiverse);

  cmd_judge_train(cfg);
  CHECK(std::filesystem::exists(p.toy_judge()));
  const auto jm = manifest(p.judge_manifest());
  CHECK(jm["train_examples"].get<std::size_t>() + jm["val_examples"].get<std::size_t>() ==
        line_count(p.judge_dataset()));

  cmd_grpo(cfg);
  auto gm = manifest(p.grpo_manifest());
  CHECK(gm["initialization"] == "warm_start");
  CHECK(gm["steps"] == 6);
  CHECK(gm["effective_weights"] == json::array({1.0, 0.5, 1.0}));
  CHECK(gm["reward_judge"] == "toy");
  CHECK(gm["probe_judge"] == "oracle");
  const auto h = read_history(p.history());
  CHECK(h.steps.size() == 6);
  CHECK(slurp(p.history()).rfind("step\tmean_reward\tmean_abs_advantage\tkl\tobjective\tacc\tgar\n", 0) == 0);
  CHECK(!std::filesystem::exists(p.checkpoint()));
  // 44 train instances in batches of 8: five full batches, then 4.
  CHECK(line_count(p.reward_trace()) == (5 * 8 + 4) * 8);

  const auto report = cmd_eval(cfg);
  const auto split = cmd_prepare(cfg);
  CHECK(report.n == split.test.size());
  CHECK(report.gar.has_value());
  CHECK(line_count(p.eval_dir() / "decoded.jsonl") == split.test.size());
  const auto rj = json::parse(slurp(p.eval_dir() / "report.json"));
  for (const auto& row : rj["normalized_rows"]) {
    const double sum = row[0].get<double>() + row[1].get<double>();
    if (sum > 0) CHECK(sum == doctest::Approx(1.0));
  }
  CHECK(cmd_report(cfg).find("training history (6 steps)") != std::string::npos);

  SUBCASE("ablations are reflected in the manifest") {
    auto ab = cfg;
    ab.weights.lambda_g = 0.0;
    ab.warm_start = false;
    cmd_grpo(ab);
    gm = manifest(p.grpo_manifest());
    CHECK(gm["initialization"] == "cold_start");
    CHECK(gm["effective_weights"] == json::array({1.0, 0.5, 0.0}));
    CHECK(gm["bc_loss_first"].is_null());
  }
}

TEST_CASE("greedy strategy on a pool without greedy trajectories") {
  TempDir dir;
  auto cfg = small_config(dir.path());
  cfg.strategy = SftStrategy::kGreedy;
  cmd_mine(cfg);
  cmd_distill(cfg);
  const StagePaths p{dir.path()};
  CHECK(line_count(p.sft()) == 0);
  CHECK(manifest(p.distill_manifest())["selection"]["emitted"] == 0);
  // Warm start with nothing to clone falls back to the zero policy.
  cfg.grpo.max_steps = 1;
  cfg.judge = JudgeKind::kOracle;
  CHECK_NOTHROW(cmd_grpo(cfg));
  CHECK(manifest(p.grpo_manifest())["demonstrations"] == 0);
}

TEST_CASE("eval scores a predictions file") {
  TempDir dir;
  auto cfg = small_config(dir.path());
  const auto split = cmd_prepare(cfg);
  const auto& test = split.test;
  REQUIRE(test.size() >= 4);

  std::string perfect, half;
  std::size_t expected_hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Label g = test[i].gold_label;
    perfect += label_line(g) + "\n";
    const bool keep = i % 2 == 0;
    expected_hits += keep;
    half += label_line(keep ? g : (g == Label::kSarcastic ? Label::kNonSarcastic : Label::kSarcastic)) + "\n";
  }
  spit(dir / "perfect.txt", perfect);
  spit(dir / "half.txt", half);
  auto r = cmd_eval(cfg, dir / "perfect.txt");
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro_f1 == 1.0);
  CHECK(!r.gar);
  r = cmd_eval(cfg, dir / "half.txt");
  CHECK(r.accuracy == doctest::Approx(double(expected_hits) / double(test.size())));
  CHECK(json::parse(slurp(dir / "eval" / "report.json"))["gar"].is_null());

  spit(dir / "short.txt", "yes\n");
  CHECK(error_of([&] { cmd_eval(cfg, dir / "short.txt"); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("prediction files") {
  TempDir dir;
  spit(dir / "p.txt", "sarcastic\nno\n\nnone\n  YES \n");
  const auto p = read_predictions(dir / "p.txt");
  REQUIRE(p.size() == 5);
  CHECK(p[0] == Label::kSarcastic);
  CHECK(p[1] == Label::kNonSarcastic);
  CHECK(!p[2]);
  CHECK(!p[3]);
  CHECK(p[4] == Label::kSarcastic);
  spit(dir / "bad.txt", "yes\nperhaps\n");
  CHECK(error_of([&] { read_predictions(dir / "bad.txt"); }) == ErrorCode::kParseError);
  CHECK(error_index_of([&] { read_predictions(dir / "bad.txt"); }) == std::size_t{2});
}

TEST_CASE("judge example split") {
  std::vector<JudgeExample> ex(53);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    ex[i].instance_id = "i" + std::to_string(i);
    ex[i].trajectory_text = "t";
  }
  const auto a = split_judge_examples(ex, 0.2, 4);
  const auto b = split_judge_examples(ex, 0.2, 4);
  CHECK(a.val.size() == 10);
  CHECK(a.train.size() == 43);
  std::set<std::string> ids;
  for (const auto& e : a.train) ids.insert(e.instance_id);
  for (const auto& e : a.val) ids.insert(e.instance_id);
  CHECK(ids.size() == 53);
  for (std::size_t i = 0; i < a.val.size(); ++i) CHECK(a.val[i].instance_id == b.val[i].instance_id);
}

TEST_CASE("command line") {
  TempDir dir;
  const std::string out = (dir / "run").string();
  CHECK(run_command(cli("synth -o " + out + " --set data.synth_instances=40 > /dev/null 2>&1")) == 0);
  CHECK(std::filesystem::exists(dir / "run" / "data" / "train.jsonl"));
  CHECK(!std::filesystem::exists(dir / "run" / ".forge.lock"));

  CHECK(run_command(cli("synth -o " + out + " --set grpo.nope=1 > /dev/null 2>&1")) == 2);
  CHECK(run_command(cli("synth -o " + out + " --set missing_equals > /dev/null 2>&1")) == 2);

  spit(dir / "run" / ".forge.lock", "123\n");
  CHECK(run_command(cli("synth -o " + out + " > " + (dir / "err.txt").string() + " 2>&1")) == 2);
  CHECK(slurp(dir / "err.txt").find("LOCKED") != std::string::npos);
  std::filesystem::remove(dir / "run" / ".forge.lock");

  spit(dir / "c.ini", "[grpo]\nlearning_rate = 0.3\n");
  CHECK(run_command(cli("config -c " + (dir / "c.ini").string() + " --no-genrm > " +
                        (dir / "cfg.txt").string())) == 0);
  const auto text = slurp(dir / "cfg.txt");
  CHECK(text.find("grpo.learning_rate = 0.3") != std::string::npos);
  CHECK(text.find("reward.lambda_g = 0") != std::string::npos);

  CHECK(run_command(cli("report -o " + out + " > /dev/null")) == 0);
  CHECK(run_command(cli("bogus > /dev/null 2>&1")) != 0);
}

}  // TEST_SUITE
