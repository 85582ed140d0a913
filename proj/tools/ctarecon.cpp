// ctarecon: run, validate and inspect tomography scenarios.
//
// Exit status: 0 success, 1 an acceptance check failed or a manifest hash
// does not match, 2 usage, parse or validation error, 3 numerical or I/O
// failure during a run.

#include <CLI11.hpp>

#include "cta/scenario.hpp"

namespace {

using namespace cta;

int cmd_validate(const std::string& path) {
    const auto s = scenario::load(path);
    std::cout << "valid: " << s.name << " (pipeline " << scenario::to_string(s.pipeline) << ", " << s.phantoms.size()
              << " phantoms)\n";
    return 0;
}

int cmd_run(const std::string& path, const std::string& out, unsigned workers, double tol_scale) {
    const auto s = scenario::load(path);
    scenario::RunOptions opt;
    opt.out_dir = out;
    opt.workers = workers;
    opt.tol_scale = tol_scale;
    opt.log = &std::cerr;
    const auto res = scenario::run(s, opt);
    for (const auto& c : res.checks)
        std::cout << (c.passed() ? "PASS " : "FAIL ") << c.name << " = " << io::short_num(c.value)
                  << " (tolerance " << io::short_num(c.tolerance) << ")\n";
    for (const auto& n : res.notes) std::cout << "note: " << n << "\n";
    std::cout << "artifacts: " << res.out_dir.string() << "\n";
    return res.all_passed() ? 0 : 1;
}

int cmd_report(std::string out, const std::string& path) {
    if (out.empty()) {
        if (path.empty()) throw scenario::ValidationError("--out", "report needs --out or --scenario");
        out = scenario::load(path).output_dir;
    }
    const auto rep = scenario::read_report(out);
    const auto man = io::verify_manifest(out);
    for (const auto& [k, v] : rep.scenario) std::cout << k << " = " << v << "\n";
    for (const auto& [k, v] : rep.checks) std::cout << k << " = " << v << "\n";
    std::cout << "manifest: " << man.files << " files, " << man.mismatched.size() << " mismatched, " << man.missing.size()
              << " missing\n";
    for (const auto& f : man.mismatched) std::cout << "mismatch: " << f << "\n";
    for (const auto& f : man.missing) std::cout << "missing: " << f << "\n";
    return rep.failed == 0 && man.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tomographic reduction and reconstruction for magnetic Schrodinger inverse problems"};
    app.require_subcommand(1);
    std::string scen, out;
    unsigned workers = 1;
    double tol_scale = 1.0;

    auto* run = app.add_subcommand("run", "execute the scenario's pipeline and write artifacts");
    run->add_option("--scenario", scen, "scenario file")->required();
    run->add_option("--out", out, "output directory (overrides scenario.output_dir)");
    run->add_option("--workers", workers, "worker threads")->check(CLI::Range(1u, 256u));
    run->add_option("--tol-scale", tol_scale, "multiply every tolerance by this factor")->check(CLI::PositiveNumber);

    auto* val = app.add_subcommand("validate", "check a scenario without running it");
    val->add_option("--scenario", scen, "scenario file")->required();

    auto* rep = app.add_subcommand("report", "summarize a finished run and verify its manifest");
    rep->add_option("--out", out, "output directory of the run");
    rep->add_option("--scenario", scen, "scenario file, used to locate the output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*val) return cmd_validate(scen);
        if (*run) return cmd_run(scen, out, workers, tol_scale);
        if (*rep) return cmd_report(out, scen);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
