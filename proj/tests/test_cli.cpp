#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <variant>

#include <json.hpp>

#include "polyfuse/fusion.hpp"
#include "polyfuse/serialize.hpp"

using namespace polyfuse;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int code = -1;
    std::string output;
};

fs::path tmp_file(const std::string& name) {
    return fs::temp_directory_path() / ("polyfuse_cli_" + name);
}

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path capture = tmp_file("capture_" + std::to_string(counter++) + ".txt");
    const std::string cmd = std::string("\"") + POLYFUSE_CLI_PATH + "\" " + args +
                            " > " + capture.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
    std::ifstream in(capture);
    std::ostringstream text;
    text << in.rdbuf();
    r.output = text.str();
    return r;
}

std::string write_json_file(const std::string& name, const json& j) {
    const fs::path path = tmp_file(name + ".json");
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    return path.string();
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    json j;
    in >> j;
    return j;
}

json paper_configs() {
    return json::array({
        {{"variant", "Dense"}, {"m", 384}, {"a", 256}, {"d", 128}, {"n", 10}},
        {{"variant", "PF-CP"}, {"m", 384}, {"a", 256}, {"d", 128}, {"n", 10}, {"rank", 128}},
        {{"variant", "PF-Tucker"},
         {"m", 384},
         {"a", 256},
         {"d", 128},
         {"n", 10},
         {"ranks", {192, 128, 64}}},
        {{"variant", "PF-CMF"}, {"m", 384}, {"a", 256}, {"d", 128}, {"n", 10}, {"rank", 128}},
        {{"variant", "PF-CMF-SR"},
         {"m", 384},
         {"a", 256},
         {"d", 128},
         {"n", 10},
         {"rank", 128}},
        {{"variant", "Concat"}, {"a", 256}, {"d", 128}, {"n", 10}},
    });
}

json small_factorized_configs() {
    return json::array({
        {{"variant", "PF-CP"}, {"m", 5}, {"a", 4}, {"d", 3}, {"rank", 2}},
        {{"variant", "PF-Tucker"}, {"m", 5}, {"a", 4}, {"d", 3}, {"ranks", {2, 2, 2}}},
        {{"variant", "PF-CMF"}, {"m", 5}, {"a", 4}, {"d", 3}, {"rank", 2}},
        {{"variant", "PF-CMF-SR"}, {"m", 5}, {"a", 4}, {"d", 3}, {"rank", 2}},
    });
}

json toy_runspec(double mse_threshold) {
    return json{{"config",
                 {{"variant", "PF-CP"}, {"m", 6}, {"a", 5}, {"d", 4}, {"rank", 2}}},
                {"seed", 3},
                {"samples", 120},
                {"noise_sigma", 0.0},
                {"epochs", 150},
                {"lr", 1e-2},
                {"mse_threshold", mse_threshold}};
}

}  // namespace

TEST_CASE("params reports the reference width counts") {
    const std::string cfg = write_json_file("paper", paper_configs());
    const fs::path out = tmp_file("params_out.json");
    const RunResult r = run_cli("params --config " + cfg + " --out " + out.string());
    CHECK(r.code == 0);
    const json doc = read_json_file(out.string());
    CHECK(doc.at("command") == "params");
    REQUIRE(doc.at("results").size() == 6);
    const std::uint64_t expected[] = {12730752, 98560, 1687744, 147840, 98688, 0};
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(doc.at("results")[i].at("params").get<std::uint64_t>() == expected[i]);
        CHECK(doc.at("results")[i].at("dense_params").get<std::uint64_t>() == 12730752);
    }
    CHECK(doc.at("results")[1].at("ratio").get<double>() ==
          doctest::Approx(129.17).epsilon(1e-3));
    CHECK(doc.at("results")[4].at("ratio").get<double>() ==
          doctest::Approx(129.00).epsilon(1e-3));
    CHECK(doc.at("results")[5].at("ratio").is_null());
}

TEST_CASE("params accepts an empty config list") {
    const std::string cfg = write_json_file("empty", json::array());
    const RunResult r = run_cli("params --config " + cfg);
    CHECK(r.code == 0);
    CHECK(r.output.find("no configs") != std::string::npos);
}

TEST_CASE("equiv passes at default tolerance and fails at zero") {
    const std::string cfg = write_json_file("equiv_small", small_factorized_configs());
    const fs::path out = tmp_file("equiv_out.json");
    RunResult r = run_cli("equiv --config " + cfg + " --trials 200 --seed 5 --out " +
                          out.string());
    CHECK(r.code == 0);
    const json doc = read_json_file(out.string());
    CHECK(doc.at("command") == "equiv");
    CHECK(doc.at("seed") == 5);
    CHECK(doc.at("trials") == 200);
    CHECK(doc.at("pass") == true);
    REQUIRE(doc.at("results").size() == 4);
    for (const json& row : doc.at("results")) {
        CHECK(row.at("pass") == true);
        CHECK(row.at("max_rel_error").get<double>() <= 1e-10);
    }

    r = run_cli("equiv --config " + cfg + " --trials 20 --tol 0");
    CHECK(r.code == 1);
    CHECK(r.output.find("FAIL") != std::string::npos);
}

TEST_CASE("equiv refuses configs whose dense twin exceeds the cap") {
    const std::string cfg = write_json_file("equiv_paper_cp", paper_configs()[1]);
    const RunResult r =
        run_cli("equiv --config " + cfg + " --trials 1 --dense-cap 1000000");
    CHECK(r.code == 2);
    CHECK(r.output.find("refusing to materialize") != std::string::npos);
}

TEST_CASE("equiv rejects Concat configs") {
    const std::string cfg =
        write_json_file("equiv_concat",
                        json{{"variant", "Concat"}, {"a", 4}, {"d", 3}});
    const RunResult r = run_cli("equiv --config " + cfg + " --trials 1");
    CHECK(r.code == 2);
}

TEST_CASE("checkgrad passes every variant") {
    json configs = small_factorized_configs();
    configs.push_back({{"variant", "Dense"}, {"m", 5}, {"a", 4}, {"d", 3}});
    configs.push_back({{"variant", "Concat"}, {"a", 4}, {"d", 3}});
    const std::string cfg = write_json_file("grad_small", configs);
    const fs::path out = tmp_file("grad_out.json");
    const RunResult r =
        run_cli("checkgrad --config " + cfg + " --trials 10 --out " + out.string());
    CHECK(r.code == 0);
    const json doc = read_json_file(out.string());
    CHECK(doc.at("command") == "checkgrad");
    CHECK(doc.at("h") == 1e-5);
    CHECK(doc.at("tol") == 1e-6);
    CHECK(doc.at("pass") == true);
    REQUIRE(doc.at("results").size() == 6);
    for (const json& row : doc.at("results")) {
        bool saw_za = false, saw_zd = false;
        for (const json& slot : row.at("slots")) {
            CHECK(slot.at("pass") == true);
            if (slot.at("slot") == "z_a") saw_za = true;
            if (slot.at("slot") == "z_d") saw_zd = true;
        }
        CHECK(saw_za);
        CHECK(saw_zd);
    }
}

TEST_CASE("checkgrad only caps Dense-variant configs") {
    // Full-width factorized configs run under any cap; the loose tolerance
    // keeps finite-difference roundoff at this scale out of the exit code.
    const std::string cfg = write_json_file("grad_paper_cp", paper_configs()[1]);
    const RunResult r = run_cli("checkgrad --config " + cfg +
                                " --trials 1 --tol 1e-3 --dense-cap 1000000");
    CHECK(r.code == 0);

    const std::string dense_cfg = write_json_file("grad_paper_dense", paper_configs()[0]);
    const RunResult rd = run_cli("checkgrad --config " + dense_cfg +
                                 " --trials 1 --dense-cap 1000000");
    CHECK(rd.code == 2);
}

TEST_CASE("bench runs and honors --iterations 0") {
    const std::string cfg = write_json_file("bench_small", small_factorized_configs()[0]);
    const fs::path out = tmp_file("bench_out.json");
    RunResult r = run_cli("bench --config " + cfg + " --iterations 50 --out " +
                          out.string());
    CHECK(r.code == 0);
    const json doc = read_json_file(out.string());
    CHECK(doc.at("results")[0].at("iterations") == 50);
    CHECK(doc.at("results")[0].at("median_ns").get<double>() > 0.0);
    CHECK(doc.at("results")[0].contains("max_single_alloc_bytes"));

    r = run_cli("bench --config " + cfg + " --iterations 0");
    CHECK(r.code == 0);
    CHECK(r.output.find("skipped") != std::string::npos);
}

TEST_CASE("traintoy converges, reports, and is deterministic") {
    const std::string spec = write_json_file("toy", toy_runspec(1e-3));
    const fs::path out1 = tmp_file("toy_out1.json");
    const fs::path out2 = tmp_file("toy_out2.json");
    RunResult r = run_cli("traintoy --config " + spec + " --out " + out1.string());
    CHECK(r.code == 0);
    json doc1 = read_json_file(out1.string());
    CHECK(doc1.at("command") == "traintoy");
    CHECK(doc1.at("converged") == true);
    CHECK(doc1.at("diverged") == false);
    CHECK(doc1.at("task_seed") == 3);
    CHECK(doc1.at("student_seed") == 4);
    CHECK(doc1.at("samples") == 120);
    CHECK(doc1.at("train_mse").size() == 151);
    CHECK(doc1.at("train_mse").back().get<double>() <= 1e-3);

    r = run_cli("traintoy --config " + spec + " --out " + out2.string());
    CHECK(r.code == 0);
    json doc2 = read_json_file(out2.string());
    doc1.erase("wall_ms");
    doc2.erase("wall_ms");
    CHECK(doc1 == doc2);
}

TEST_CASE("traintoy --seed overrides the runspec") {
    const std::string spec = write_json_file("toy_seed", toy_runspec(1e9));
    const fs::path out = tmp_file("toy_seed_out.json");
    const RunResult r =
        run_cli("traintoy --config " + spec + " --seed 11 --out " + out.string());
    CHECK(r.code == 0);
    const json doc = read_json_file(out.string());
    CHECK(doc.at("task_seed") == 11);
    CHECK(doc.at("student_seed") == 12);
}

TEST_CASE("traintoy exits 1 when the threshold is unreachable") {
    const std::string spec = write_json_file("toy_hard", toy_runspec(0.0));
    const fs::path out = tmp_file("toy_hard_out.json");
    const RunResult r = run_cli("traintoy --config " + spec + " --out " + out.string());
    CHECK(r.code == 1);
    CHECK(read_json_file(out.string()).at("converged") == false);
}

TEST_CASE("traintoy task bundles reproduce the run") {
    const std::string spec = write_json_file("toy_bundle", toy_runspec(1e-3));
    const fs::path task_prefix = tmp_file("toy_task");
    const fs::path student_prefix = tmp_file("toy_student");
    const fs::path out1 = tmp_file("toy_bundle_out1.json");
    const fs::path out2 = tmp_file("toy_bundle_out2.json");
    std::filesystem::remove(task_prefix.string() + ".json");
    std::filesystem::remove(task_prefix.string() + ".blob");

    RunResult r = run_cli("traintoy --config " + spec + " --save-task " +
                          task_prefix.string() + " --save-student " +
                          student_prefix.string() + " --out " + out1.string());
    CHECK(r.code == 0);
    CHECK(fs::exists(task_prefix.string() + ".json"));
    CHECK(fs::exists(task_prefix.string() + ".blob"));

    r = run_cli("traintoy --config " + spec + " --load-task " + task_prefix.string() +
                " --out " + out2.string());
    CHECK(r.code == 0);
    json doc1 = read_json_file(out1.string());
    json doc2 = read_json_file(out2.string());
    doc1.erase("wall_ms");
    doc2.erase("wall_ms");
    CHECK(doc1 == doc2);

    const FusionLayer student = load_layer(student_prefix.string());
    CHECK(student.config().variant == Variant::cp);
    CHECK(std::holds_alternative<CpFactors>(student.params()));
}

TEST_CASE("validation failures exit 2") {
    CHECK(run_cli("params --config /nonexistent/path.json").code == 2);
    CHECK(run_cli("nosuchcommand").code == 2);
    CHECK(run_cli("params").code == 2);

    const std::string bad_variant = write_json_file(
        "bad_variant", json{{"variant", "PF-XX"}, {"m", 4}, {"a", 3}, {"d", 2}});
    CHECK(run_cli("params --config " + bad_variant).code == 2);

    const std::string bad_key = write_json_file(
        "bad_key", json{{"config", {{"variant", "Concat"}, {"a", 2}, {"d", 2}}},
                        {"surprise", 1}});
    CHECK(run_cli("traintoy --config " + bad_key).code == 2);

    const std::string not_json = tmp_file("not_json.json").string();
    std::ofstream(not_json) << "{broken";
    CHECK(run_cli("params --config " + not_json).code == 2);
}

TEST_CASE("--version exits cleanly") {
    const RunResult r = run_cli("--version");
    CHECK(r.code == 0);
    CHECK(!r.output.empty());
}
