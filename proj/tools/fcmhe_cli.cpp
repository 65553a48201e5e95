// fcmhe command-line driver: simulation, networked vehicle/cloud nodes, metrics and
// debugging helpers.

#include "fcmhe/fcmhe.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace fcmhe;

namespace {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kNumericalError = 3,
    kConnectRefused = 4,
    kSessionLost = 5,
};

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

RunConfig load_run_config(const CommonOptions& o) {
    RunConfig c = o.config.empty() ? reference_config() : load_config(o.config);
    if (o.seed) {
        c.sim.seed = *o.seed;
        c.network.channel.seed = *o.seed;
    }
    if (!o.out.empty()) c.output.dir = o.out;
    return c;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    auto out = open_out(p);
    out << j.dump(2) << '\n';
}

MetricsReport metrics_from_files(const fs::path& truth, const fs::path& est, const MetricsOptions& opt,
                                 const std::optional<fs::path>& session, const std::optional<fs::path>& figures) {
    const csv::Table tt = csv::read_table(truth.string());
    const csv::Table te = csv::read_table(est.string());
    const AlignedSeries a = align(tt, te);
    MetricsReport r = compute_metrics(a, opt);
    if (session) {
        const csv::Table ts = csv::read_table(session->string());
        std::vector<long> stale;
        for (double v : ts.numeric_column("staleness")) stale.push_back(std::lround(v));
        r.staleness = staleness_stats(std::move(stale));
    }
    if (figures) write_figure_data(*figures, a);
    return r;
}

MetricsOptions metrics_options(const RunConfig& c) {
    return MetricsOptions{c.output.eval_from, c.output.conv_threshold};
}

int cmd_simulate(const CommonOptions& o) {
    const RunConfig c = load_run_config(o);
    const Scenario s = make_scenario(c);
    const fs::path dir = c.output.dir;
    fs::create_directories(dir);

    log::info("simulating " + std::to_string(c.sim.steps() + 1) + " samples at ts=" + std::to_string(c.sim.ts));
    const Trajectory tr = simulate_truth(s, c);
    const auto packets = vehicle_packets(tr, c);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = estimate_in_process(s, packets);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log::info("estimation took " + std::to_string(secs) + " s");

    {
        auto out = open_out(dir / "truth.csv");
        write_truth_csv(out, tr);
    }
    {
        auto out = open_out(dir / "estimates.csv");
        write_estimates_csv(out, rows);
    }
    const MetricsReport r =
        metrics_from_files(dir / "truth.csv", dir / "estimates.csv", metrics_options(c), std::nullopt, std::nullopt);
    write_json(dir / "metrics.json", to_json(r));
    std::cout << "wrote " << (dir / "truth.csv").string() << ", " << (dir / "estimates.csv").string() << ", "
              << (dir / "metrics.json").string() << " (" << tr.size() << " rows)\n";
    std::cout << "unmeasured-state RMSE after t=" << c.output.eval_from << " s: " << r.unmeasured_rmse_after << '\n';
    return kOk;
}

int cmd_serve_cloud(const CommonOptions& o, const std::string& listen) {
    const RunConfig c = load_run_config(o);
    const Scenario s = make_scenario(c);
    const Endpoint ep = parse_endpoint(listen);
    const fs::path dir = c.output.dir;
    fs::create_directories(dir);

    Listener listener(ep);
    // Announce the bound port (useful with port 0) before blocking in accept.
    std::cout << "listening on " << ep.host << ':' << listener.port() << std::endl;
    Connection conn = listener.accept();
    log::info("vehicle connected");

    CloudProcessor cloud = make_cloud(s);
    const CloudSessionLog session = run_cloud_node(conn, cloud);
    {
        auto out = open_out(dir / "estimates.csv");
        write_estimates_csv(out, cloud.rows());
    }
    {
        auto out = open_out(dir / "cloud_session.csv");
        write_cloud_session_csv(out, session);
    }
    std::cout << "processed " << cloud.processed() << " measurements, discarded " << cloud.discarded()
              << ", gap-filled " << cloud.filled() << ", decode errors " << session.decode_errors << '\n';
    if (session.connection_lost) {
        std::cerr << "error: vehicle connection lost mid-session; partial artifacts written\n";
        return kSessionLost;
    }
    return kOk;
}

int cmd_run_vehicle(const CommonOptions& o, const std::string& connect) {
    const RunConfig c = load_run_config(o);
    const Scenario s = make_scenario(c);
    const Endpoint ep = parse_endpoint(connect);
    const fs::path dir = c.output.dir;
    fs::create_directories(dir);

    const Trajectory tr = simulate_truth(s, c);
    const auto packets = vehicle_packets(tr, c);
    const auto timeout = std::chrono::milliseconds(std::llround(c.network.connect_timeout_s * 1000.0));
    Connection conn = connect_to(ep, timeout);

    VehicleOptions opt;
    opt.channel = c.network.channel;
    opt.ts = c.sim.ts;
    const VehicleSessionLog session = run_vehicle_node(conn, packets, opt);
    conn.close();

    {
        auto out = open_out(dir / "truth.csv");
        write_truth_csv(out, tr);
    }
    {
        auto out = open_out(dir / "vehicle_session.csv");
        write_vehicle_session_csv(out, session);
    }
    {
        // Received estimates in seq order; iteration counts are not carried on the wire.
        auto out = open_out(dir / "received_estimates.csv");
        csv::Writer w(out);
        std::vector<std::string> h{"seq", "t"};
        for (const auto& x : csv::numbered("xhat", kStates)) h.push_back(x);
        h.emplace_back("qp_status");
        w.header(h);
        for (const auto& r : received_rows(session)) {
            w.cell(static_cast<long long>(r.seq)).cell(r.t).cells(r.xhat).cell(std::string(to_string(r.status)));
            w.end_row();
        }
    }
    std::vector<long> stale;
    for (const auto& r : session.received) stale.push_back(r.staleness);
    const std::vector<int> unmeasured(kUnmeasuredSlots.begin(), kUnmeasuredSlots.end());
    nlohmann::json summary = {{"sent", session.sent},
                              {"dropped_uplink", session.dropped_uplink},
                              {"received", session.received.size()},
                              {"duplicate_replies", session.duplicate_replies},
                              {"connection_lost", session.connection_lost},
                              {"held_unmeasured_rmse", held_estimate_rmse(session, tr, unmeasured)}};
    const StalenessStats st = staleness_stats(stale);
    summary["staleness"] = {{"count", st.count}, {"mean", st.mean}, {"median", st.median}, {"max", st.max}};
    write_json(dir / "vehicle_metrics.json", summary);

    std::cout << "sent " << session.sent << " measurements (" << session.dropped_uplink << " dropped), received "
              << session.received.size() << " estimates, median staleness " << st.median << " steps\n";
    if (session.connection_lost) {
        std::cerr << "error: cloud connection lost mid-session; partial artifacts written\n";
        return kSessionLost;
    }
    return kOk;
}

int cmd_metrics(const CommonOptions& o, const std::string& truth, const std::string& est,
                const std::string& session) {
    RunConfig c = o.config.empty() ? reference_config() : load_config(o.config);
    const fs::path dir = o.out.empty() ? fs::path(c.output.dir) : fs::path(o.out);
    fs::create_directories(dir);
    std::optional<fs::path> sess;
    if (!session.empty()) sess = session;
    const MetricsReport r = metrics_from_files(truth, est, metrics_options(c), sess, dir);
    write_json(dir / "metrics.json", to_json(r));
    std::cout << to_json(r).dump(2) << '\n';
    return kOk;
}

void write_matrix_csv(const fs::path& p, const Eigen::MatrixXd& m) {
    auto out = open_out(p);
    csv::Writer w(out);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) w.cell(m(i, j));
        w.end_row();
    }
}

int cmd_dump_model(const CommonOptions& o) {
    const RunConfig c = load_run_config(o);
    const Scenario s = make_scenario(c);
    const fs::path dir = c.output.dir;
    fs::create_directories(dir);
    write_matrix_csv(dir / "A.csv", s.model.a);
    write_matrix_csv(dir / "B.csv", s.model.b);
    write_matrix_csv(dir / "Br.csv", s.model.br);
    write_matrix_csv(dir / "C.csv", s.model.c);
    write_matrix_csv(dir / "D.csv", s.model.d);
    write_matrix_csv(dir / "Ad.csv", s.plant.ad);
    write_matrix_csv(dir / "Bd.csv", s.plant.bd);
    write_matrix_csv(dir / "Brd.csv", s.plant.brd);
    std::cout << "wrote continuous (A, B, Br, C, D) and discrete (Ad, Bd, Brd; ts=" << c.sim.ts << ") matrices to "
              << dir.string() << '\n';
    return kOk;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j, const char* key, Eigen::Index cols) {
    if (!j.contains(key)) return Eigen::MatrixXd(0, cols);
    const auto& a = j.at(key);
    if (!a.is_array()) throw ConfigError(key, "expected an array of rows");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()), cols);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_array() || static_cast<Eigen::Index>(a[i].size()) != cols) {
            throw ConfigError(std::string(key) + "[" + std::to_string(i) + "]", "row has the wrong length");
        }
        for (Eigen::Index k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), k) = a[i][static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

Eigen::VectorXd json_vector(const nlohmann::json& j, const char* key, Eigen::Index n, double null_value) {
    Eigen::VectorXd v(n);
    const auto& a = j.at(key);
    if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != n) throw ConfigError(key, "wrong length");
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& e = a[static_cast<std::size_t>(i)];
        v(i) = e.is_null() ? null_value : e.get<double>();
    }
    return v;
}

nlohmann::json json_of(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

/// Problem bundle: {"h": [[..]], "f": [..], "g": [[..]], "lo": [..], "hi": [..]},
/// null bounds meaning infinite; optional "tol" and "max_iter".
int cmd_solve_qp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open problem file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
    QpProblem p;
    QpSettings settings;
    try {
        const auto n = static_cast<Eigen::Index>(j.at("f").size());
        p.f = json_vector(j, "f", n, 0.0);
        p.h = json_matrix(j, "h", n);
        p.g = json_matrix(j, "g", n);
        p.lo = j.contains("lo") ? json_vector(j, "lo", p.g.rows(), -kInf) : Eigen::VectorXd::Constant(p.g.rows(), -kInf);
        p.hi = j.contains("hi") ? json_vector(j, "hi", p.g.rows(), kInf) : Eigen::VectorXd::Constant(p.g.rows(), kInf);
        if (j.contains("tol")) settings.tol = j.at("tol").get<double>();
        if (j.contains("max_iter")) settings.max_iter = j.at("max_iter").get<int>();
        p.validate();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path, e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
    const QpSolution sol = solve(p, settings);
    const nlohmann::json out = {{"status", to_string(sol.status)},
                                {"z", json_of(sol.z)},
                                {"lambda", json_of(sol.lambda)},
                                {"objective", sol.objective},
                                {"iterations", sol.iterations},
                                {"kkt",
                                 {{"stationarity", sol.kkt.stationarity},
                                  {"primal", sol.kkt.primal},
                                  {"complementarity", sol.kkt.complementarity}}}};
    std::cout << out.dump(2) << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Constrained moving horizon estimation for a full-car suspension over a simulated V2C2V link"};
    app.require_subcommand(1);

    CommonOptions common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "Run configuration (JSON); defaults to the reference scenario");
        sub->add_option("--seed", common.seed, "Override the simulation and channel seeds");
        sub->add_option("--out", common.out, "Output directory (overrides output.dir)");
    };

    auto* simulate = app.add_subcommand("simulate", "Run plant and estimator in-process");
    add_common(simulate);

    std::string listen = "127.0.0.1:7400";
    auto* serve = app.add_subcommand("serve-cloud", "Run the cloud node: road lookup + MHE per measurement");
    add_common(serve);
    serve->add_option("--listen", listen, "ADDR:PORT to listen on (port 0 picks a free port)");

    std::string connect = "127.0.0.1:7400";
    auto* vehicle = app.add_subcommand("run-vehicle", "Run the vehicle node against a cloud endpoint");
    add_common(vehicle);
    vehicle->add_option("--connect", connect, "ADDR:PORT of the cloud node");

    std::string truth, estimates, session;
    auto* metrics = app.add_subcommand("metrics", "Compare estimates with truth; write metrics.json and .dat files");
    add_common(metrics);
    metrics->add_option("--truth", truth, "truth.csv")->required();
    metrics->add_option("--estimates", estimates, "estimates.csv")->required();
    metrics->add_option("--session", session, "vehicle_session.csv for staleness statistics");

    auto* dump = app.add_subcommand("dump-model", "Write the model matrices as CSV");
    add_common(dump);

    std::string problem;
    auto* qp = app.add_subcommand("solve-qp", "Solve a QP bundle (JSON) and print solution and residuals");
    qp->add_option("problem", problem, "Problem JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*simulate) return cmd_simulate(common);
        if (*serve) return cmd_serve_cloud(common, listen);
        if (*vehicle) return cmd_run_vehicle(common, connect);
        if (*metrics) return cmd_metrics(common, truth, estimates, session);
        if (*dump) return cmd_dump_model(common);
        if (*qp) return cmd_solve_qp(problem);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error at step " << e.step() << ": " << e.what() << '\n';
        return kNumericalError;
    } catch (const ConnectRefused& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConnectRefused;
    } catch (const ConnectionLost& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kSessionLost;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kOk;
}
