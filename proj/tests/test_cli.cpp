// End-to-end tests of the vnas binary. CMake points VNAS_BIN at the built
// executable; every case shells out to it and inspects exit codes, stdout
// JSON lines, and the files it writes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vnas/fusion.hpp"
#include "vnas/qnet.hpp"
#include "vnas/serialization.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vnas;

namespace {

struct RunOut {
  int exit_code = -1;
  std::string out;  // stdout + stderr interleaved
};

std::string vnas_bin() {
  const char* bin = std::getenv("VNAS_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "VNAS_BIN must point at the vnas binary");
  return bin;
}

RunOut run(const std::string& args) {
  const std::string cmd = vnas_bin() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunOut r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe))
    r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// Last stdout line parsed as JSON (commands print one summary line).
json last_json_line(const std::string& out) {
  std::size_t end = out.find_last_not_of('\n');
  REQUIRE(end != std::string::npos);
  std::size_t start = out.rfind('\n', end);
  start = (start == std::string::npos) ? 0 : start + 1;
  return json::parse(out.substr(start, end - start + 1));
}

// One scratch directory for the whole test program, removed on exit.
const fs::path& scratch_dir() {
  static struct Scratch {
    fs::path p;
    Scratch() {
      char tmpl[] = "/tmp/vnas_cli_XXXXXX";
      REQUIRE(mkdtemp(tmpl) != nullptr);
      p = tmpl;
    }
    ~Scratch() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } s;
  return s.p;
}

// Small 8px problem so every pipeline stage runs in well under a second.
std::string tiny_config(int steps = 20) {
  const fs::path path = scratch_dir() / ("tiny_" + std::to_string(steps) +
                                         ".json");
  if (!fs::exists(path)) {
    std::ofstream out(path);
    out << R"({
  "seed": 4100,
  "network": {
    "image_size": 8, "num_sites": 2,
    "conv_channels": [4, 3, 3], "conv_ksize": [3, 3, 3],
    "conv_stride": [1, 2, 1],
    "dilated_rates": [2], "dilated_channels": 2,
    "dilated_ksize": 3, "dilated_stride": 4, "head_hidden": 4
  },
  "env": { "image_size": 8 },
  "dataset": { "episodes": 30 },
  "trainer": {
    "steps": )" << steps
        << R"(, "batch_size": 8, "target_refresh": 10,
    "eval_interval": 10, "eval_episodes": 4, "checkpoint_interval": 10
  },
  "cem": { "population": 8, "iterations": 1 }
})";
  }
  return path.string();
}

// gen-data + search artifacts shared by the downstream cases.
struct Pipeline {
  std::string dataset;
  fs::path search_out;
};

const Pipeline& pipeline() {
  static Pipeline p = [] {
    Pipeline q;
    q.dataset = (scratch_dir() / "data.bin").string();
    q.search_out = scratch_dir() / "search";
    RunOut gen = run("gen-data --config " + tiny_config() + " --out " +
                     q.dataset);
    REQUIRE_MESSAGE(gen.exit_code == 0, gen.out);
    RunOut sr = run("search --config " + tiny_config() + " --dataset " +
                    q.dataset + " --out " + q.search_out.string());
    REQUIRE_MESSAGE(sr.exit_code == 0, sr.out);
    return q;
  }();
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), {}};
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += (c == '\n');
  return n;
}

}  // namespace

TEST_CASE("gen-data writes a valid dataset and reports its stats") {
  const Pipeline& p = pipeline();
  RunOut r = run("gen-data --config " + tiny_config() + " --out " +
                 p.dataset);
  CHECK(r.exit_code == 0);
  const json line = last_json_line(r.out);
  CHECK(line["episodes"] == 30);
  CHECK(line["transitions"].get<int>() > 30);
  CHECK(line["hash"].get<std::string>().size() == 16);
  CHECK(line["path"] == p.dataset);
  // binary format magic
  CHECK(slurp(p.dataset).substr(0, 4) == "VNBF");

  SUBCASE("same seed regenerates byte-identical data") {
    const fs::path again = scratch_dir() / "data_again.bin";
    RunOut r2 = run("gen-data --config " + tiny_config() + " --out " +
                    again.string());
    CHECK(r2.exit_code == 0);
    CHECK(last_json_line(r2.out)["hash"] == line["hash"]);
    CHECK(slurp(again) == slurp(p.dataset));
  }
  SUBCASE("--seed overrides the config and changes the data") {
    const fs::path other = scratch_dir() / "data_seed9.bin";
    RunOut r2 = run("gen-data --config " + tiny_config() +
                    " --seed 9 --out " + other.string());
    CHECK(r2.exit_code == 0);
    CHECK(last_json_line(r2.out)["hash"] != line["hash"]);
  }
  SUBCASE("expert fraction steers the success mix") {
    const fs::path cfg = scratch_dir() / "experts.json";
    {
      std::ofstream out(cfg);
      out << R"({"network": {"image_size": 8, "num_sites": 2,
                   "conv_channels": [4, 3, 3], "conv_ksize": [3, 3, 3],
                   "conv_stride": [1, 2, 1], "dilated_rates": [2],
                   "dilated_channels": 2, "dilated_ksize": 3,
                   "dilated_stride": 4, "head_hidden": 4},
                 "env": {"image_size": 8},
                 "dataset": {"episodes": 20, "expert_fraction": 1.0,
                             "noise": 0.0}})";
    }
    RunOut r2 = run("gen-data --config " + cfg.string() + " --out " +
                    (scratch_dir() / "experts.bin").string());
    CHECK(r2.exit_code == 0);
    CHECK(last_json_line(r2.out)["success_fraction"].get<double>() >= 0.9);
  }
}

TEST_CASE("search writes the full artifact set") {
  const Pipeline& p = pipeline();
  for (const char* name :
       {"config.json", "metrics.csv", "checkpoint.bin",
        "checkpoint_step_10.bin", "architecture.txt", "run_meta.json"})
    CHECK_MESSAGE(fs::exists(p.search_out / name), name);

  // header + one row per telemetry point (steps 0..20)
  const std::string csv = slurp(p.search_out / "metrics.csv");
  CHECK(count_lines(csv) == 22);
  CHECK(csv.substr(0, csv.find('\n')) ==
        "step,loss,eval_success,entropy_site_1,entropy_site_2,"
        "edges_retained");

  // the resolved config is itself a loadable config
  const json cfg = json::parse(slurp(p.search_out / "config.json"));
  CHECK(cfg["seed"] == 4100);
  CHECK(cfg["trainer"]["steps"] == 20);

  const json meta = json::parse(slurp(p.search_out / "run_meta.json"));
  CHECK(meta["command"] == "search");

  SUBCASE("rerun reproduces every artifact except the timestamp sidecar") {
    const fs::path again = scratch_dir() / "search_again";
    RunOut r = run("search --config " + tiny_config() + " --dataset " +
                   p.dataset + " --out " + again.string());
    CHECK(r.exit_code == 0);
    for (const char* name : {"config.json", "metrics.csv", "checkpoint.bin",
                             "checkpoint_step_10.bin", "architecture.txt"})
      CHECK_MESSAGE(slurp(again / name) == slurp(p.search_out / name), name);
  }
  SUBCASE("--steps overrides the config budget") {
    const fs::path short_out = scratch_dir() / "search_short";
    RunOut r = run("search --config " + tiny_config() + " --dataset " +
                   p.dataset + " --steps 5 --out " + short_out.string());
    CHECK(r.exit_code == 0);
    CHECK(last_json_line(r.out)["steps"] == 5);
    CHECK(count_lines(slurp(short_out / "metrics.csv")) == 7);
  }
}

TEST_CASE("retrain builds pruned networks from the extracted spec") {
  const Pipeline& p = pipeline();
  const std::string spec = (p.search_out / "architecture.txt").string();

  const fs::path fresh = scratch_dir() / "retrain_fresh";
  RunOut rf = run("retrain --config " + tiny_config() + " --dataset " +
                  p.dataset + " --spec " + spec + " --fresh --out " +
                  fresh.string());
  CHECK_MESSAGE(rf.exit_code == 0, rf.out);
  CHECK(fs::exists(fresh / "checkpoint.bin"));

  const fs::path copied = scratch_dir() / "retrain_copied";
  RunOut rc = run("retrain --config " + tiny_config() + " --dataset " +
                  p.dataset + " --spec " + spec + " --checkpoint " +
                  (p.search_out / "checkpoint.bin").string() + " --out " +
                  copied.string());
  CHECK_MESSAGE(rc.exit_code == 0, rc.out);
  // copied weights descend from a different point than fresh ones
  CHECK(slurp(copied / "checkpoint.bin") != slurp(fresh / "checkpoint.bin"));

  SUBCASE("neither --fresh nor --checkpoint is a usage error") {
    RunOut r = run("retrain --config " + tiny_config() + " --dataset " +
                   p.dataset + " --spec " + spec + " --out " +
                   (scratch_dir() / "retrain_bad").string());
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("eval reports success rates for every policy source") {
  const Pipeline& p = pipeline();

  RunOut expert = run("eval --config " + tiny_config() +
                      " --expert --eval-episodes 40");
  CHECK(expert.exit_code == 0);
  const json ej = last_json_line(expert.out);
  CHECK(ej["episodes"] == 40);
  CHECK(ej["success_rate"].get<double>() > 0.95);

  RunOut random = run("eval --config " + tiny_config() +
                      " --random --eval-episodes 20");
  CHECK(random.exit_code == 0);
  const json rj = last_json_line(random.out);
  CHECK(rj["success_rate"].get<double>() < 0.5);
  CHECK(rj["ci_half_width"].get<double>() > 0.0);

  // a search checkpoint evaluates without extra topology info
  RunOut net = run("eval --config " + tiny_config() + " --checkpoint " +
                   (p.search_out / "checkpoint.bin").string() +
                   " --eval-episodes 2");
  CHECK_MESSAGE(net.exit_code == 0, net.out);
  CHECK(last_json_line(net.out)["episodes"] == 2);

  SUBCASE("a pruned checkpoint demands its architecture file") {
    const fs::path out = scratch_dir() / "eval_pruned";
    RunOut rt = run("retrain --config " + tiny_config() + " --dataset " +
                    p.dataset + " --spec " +
                    (p.search_out / "architecture.txt").string() +
                    " --fresh --steps 2 --out " + out.string());
    REQUIRE_MESSAGE(rt.exit_code == 0, rt.out);
    const std::string ckpt = (out / "checkpoint.bin").string();
    RunOut bare = run("eval --config " + tiny_config() + " --checkpoint " +
                      ckpt + " --eval-episodes 2");
    CHECK(bare.exit_code == 2);
    RunOut with_spec = run("eval --config " + tiny_config() +
                           " --checkpoint " + ckpt + " --spec " +
                           (p.search_out / "architecture.txt").string() +
                           " --eval-episodes 2");
    CHECK_MESSAGE(with_spec.exit_code == 0, with_spec.out);
  }
  SUBCASE("exactly one policy source is enforced") {
    CHECK(run("eval --config " + tiny_config() +
              " --expert --random --eval-episodes 2")
              .exit_code == 2);
    CHECK(run("eval --config " + tiny_config() + " --eval-episodes 2")
              .exit_code == 2);
  }
  SUBCASE("--threads does not change the outcome") {
    RunOut threaded = run("eval --config " + tiny_config() +
                          " --expert --eval-episodes 40 --threads 3");
    CHECK(threaded.exit_code == 0);
    CHECK(last_json_line(threaded.out) == ej);
  }
}

TEST_CASE("export prints the architecture as a graph listing") {
  const Pipeline& p = pipeline();
  RunOut r = run("export --spec " +
                 (p.search_out / "architecture.txt").string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("site 1:") != std::string::npos);
  CHECK(r.out.find("site 2:") != std::string::npos);
  CHECK(r.out.find("merges") != std::string::npos);

  SUBCASE("an all-noop architecture lists zero merges and zero edges") {
    ArchitectureSpec spec =
        load_architecture((p.search_out / "architecture.txt").string());
    for (auto& op : spec.site_ops) op = MergeOpKind::kNoOp;
    for (auto& edges : spec.site_edges) edges.clear();
    const fs::path noop = scratch_dir() / "noop.txt";
    save_architecture(noop.string(), spec);
    RunOut rn = run("export --spec " + noop.string());
    CHECK(rn.exit_code == 0);
    CHECK(rn.out.find("total: 0 merges, 0 edges") != std::string::npos);
  }
  SUBCASE("--out writes the listing to a file instead") {
    const fs::path listing = scratch_dir() / "listing.txt";
    RunOut rf = run("export --spec " +
                    (p.search_out / "architecture.txt").string() + " --out " +
                    listing.string());
    CHECK(rf.exit_code == 0);
    CHECK(slurp(listing) == r.out);
  }
}

TEST_CASE("gradcheck audits every gradient and exits zero") {
  RunOut r = run("gradcheck");
  CHECK_MESSAGE(r.exit_code == 0, r.out);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("failure modes map to documented exit codes") {
  const Pipeline& p = pipeline();

  // 2: bad usage or config
  CHECK(run("no-such-command").exit_code == 2);
  CHECK(run("gen-data").exit_code == 2);  // missing required --out
  const fs::path bad = scratch_dir() / "bad.json";
  {
    std::ofstream out(bad);
    out << R"({"trainer": {"gravity": 9.8}})";
  }
  RunOut rb = run("gen-data --config " + bad.string() + " --out /dev/null");
  CHECK(rb.exit_code == 2);
  CHECK(rb.out.find("gravity") != std::string::npos);

  // 3: I/O failures
  CHECK(run("gen-data --config /nonexistent.json --out /dev/null")
            .exit_code == 3);
  CHECK(run("search --config " + tiny_config() +
            " --dataset /nonexistent.bin --out " +
            (scratch_dir() / "x").string())
            .exit_code == 3);
  CHECK(run("export --spec /nonexistent.txt").exit_code == 3);

  // 4: numeric divergence (an absurd learning rate blows the loss up)
  const fs::path diverge = scratch_dir() / "diverge.json";
  {
    std::ofstream out(diverge);
    out << R"({"seed": 4100,
      "network": {"image_size": 8, "num_sites": 2,
        "conv_channels": [4, 3, 3], "conv_ksize": [3, 3, 3],
        "conv_stride": [1, 2, 1], "dilated_rates": [2],
        "dilated_channels": 2, "dilated_ksize": 3, "dilated_stride": 4,
        "head_hidden": 4},
      "env": {"image_size": 8},
      "trainer": {"steps": 50, "batch_size": 8, "lr": 1e6,
                  "eval_interval": 0, "eval_episodes": 0},
      "cem": {"population": 8, "iterations": 1}})";
  }
  RunOut rd = run("search --config " + diverge.string() + " --dataset " +
                  p.dataset + " --out " + (scratch_dir() / "dv").string());
  CHECK(rd.exit_code == 4);
}
