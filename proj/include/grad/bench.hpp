#pragma once

// Query-latency scaling: grid_sample over growing node counts vs exact 1-NN
// over growing memory banks. The query workload is fixed by the seed and
// shared across sizes; only the timings vary between runs.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "grad/bank.hpp"
#include "grad/error.hpp"
#include "grad/grid.hpp"
#include "grad/rng.hpp"

namespace grad {

struct BenchConfig {
    std::vector<std::size_t> grid_sides{16, 32, 64, 160};
    std::vector<std::size_t> bank_sizes{1000, 10000, 100000};
    std::size_t trials = 31;
    std::size_t channels = 40;
    std::size_t grid_queries = 4096;  // per trial
    std::size_t bank_queries = 16;    // per trial
    std::uint64_t seed = 0;

    void validate() const {
        require_usage(!grid_sides.empty() && !bank_sizes.empty(), "bench: size lists must be non-empty");
        require_usage(std::is_sorted(grid_sides.begin(), grid_sides.end()) &&
                          std::adjacent_find(grid_sides.begin(), grid_sides.end()) == grid_sides.end(),
                      "bench: grid sizes must be strictly ascending");
        require_usage(std::is_sorted(bank_sizes.begin(), bank_sizes.end()) &&
                          std::adjacent_find(bank_sizes.begin(), bank_sizes.end()) == bank_sizes.end(),
                      "bench: bank sizes must be strictly ascending");
        require_usage(grid_sides.front() >= 2, "bench: grid side must be >= 2");
        require_usage(bank_sizes.front() >= 1, "bench: bank size must be >= 1");
        require_usage(trials >= 30, "bench: trials must be >= 30");
        require_usage(channels >= 1 && grid_queries >= 1 && bank_queries >= 1, "bench: empty workload");
    }
};

struct BenchPoint {
    std::size_t size = 0;  // grid side or bank entry count
    std::size_t elements = 0;  // grid nodes or bank entries
    double median_ns = 0.0;    // per query
    double ratio = 0.0;        // median_ns / median_ns of the smallest size
};

struct MachineDescriptor {
    std::string cpu;
    unsigned hardware_threads = 0;
    std::string compiler;
    std::string build;
};

struct BenchReport {
    BenchConfig config;
    std::vector<BenchPoint> grid;
    std::vector<BenchPoint> bank;
    double checksum = 0.0;  // keeps the timed work observable
    MachineDescriptor machine;

    double grid_ratio() const { return grid.back().ratio; }
    double bank_ratio() const { return bank.back().ratio; }
};

inline MachineDescriptor describe_machine() {
    MachineDescriptor m;
    std::ifstream in("/proc/cpuinfo");
    for (std::string line; std::getline(in, line);)
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) m.cpu = line.substr(colon + 2);
            break;
        }
    if (m.cpu.empty()) m.cpu = "unknown";
    m.hardware_threads = std::thread::hardware_concurrency();
#if defined(__clang__)
    m.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
    m.compiler = "gcc " __VERSION__;
#else
    m.compiler = "unknown";
#endif
#ifdef NDEBUG
    m.build = "release";
#else
    m.build = "debug";
#endif
    return m;
}

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <typename Fn>
double time_ns(Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

inline void fill_ratios(std::vector<BenchPoint>& pts) {
    for (auto& p : pts) p.ratio = p.median_ns / pts.front().median_ns;
}

}  // namespace detail

/// Everything the timed loops touch. Depends on the config only.
struct BenchWorkload {
    std::vector<Coord2> coords;       // grid queries
    std::vector<double> vectors;      // bank queries, row-major (bank_queries, channels)
    std::vector<ContinuousGrid> grids;  // one per grid side
    std::vector<MemoryBank> banks;      // one per bank size
};

inline BenchWorkload make_bench_workload(const BenchConfig& cfg) {
    cfg.validate();
    BenchWorkload w;
    const std::size_t C = cfg.channels;
    Rng qrng(derive_seed(cfg.seed, "bench-queries"));
    w.coords.resize(cfg.grid_queries);
    for (auto& c : w.coords) c = {qrng.uniform(-1.0, 1.0), qrng.uniform(-1.0, 1.0)};
    w.vectors.resize(cfg.bank_queries * C);
    for (auto& v : w.vectors) v = qrng.normal();
    for (std::size_t side : cfg.grid_sides)
        w.grids.push_back(init_grid<float>(C, side, side, {GridInitKind::uniform, 1.0}, derive_seed(cfg.seed, side)));
    for (std::size_t size : cfg.bank_sizes) {
        Rng brng(derive_seed(derive_seed(cfg.seed, "bench-bank"), size));
        std::vector<float> entries(size * C);
        for (auto& e : entries) e = static_cast<float>(brng.normal());
        w.banks.emplace_back(C, std::move(entries));
    }
    return w;
}

inline BenchReport bench_query_scaling(const BenchConfig& cfg) {
    const auto w = make_bench_workload(cfg);
    BenchReport rep;
    rep.config = cfg;
    rep.machine = describe_machine();
    const std::size_t C = cfg.channels;

    std::vector<double> acc(C);
    for (const auto& g : w.grids) {
        const std::size_t side = g.rows();
        std::vector<double> trial(cfg.trials);
        for (auto& t : trial) {
            std::fill(acc.begin(), acc.end(), 0.0);
            t = detail::time_ns([&] {
                for (const auto& c : w.coords) accumulate_sample(g, locate(side, side, c), 1.0, acc);
            }) / static_cast<double>(w.coords.size());
            rep.checksum += acc[0];
        }
        rep.grid.push_back({side, side * side, detail::median(trial), 0.0});
    }

    for (const auto& bank : w.banks) {
        std::vector<double> trial(cfg.trials);
        for (auto& t : trial) {
            double sink = 0.0;
            t = detail::time_ns([&] {
                for (std::size_t q = 0; q < cfg.bank_queries; ++q)
                    sink += bank.nearest(std::span<const double>(w.vectors.data() + q * C, C)).first;
            }) / static_cast<double>(cfg.bank_queries);
            rep.checksum += sink;
        }
        rep.bank.push_back({bank.size(), bank.size(), detail::median(trial), 0.0});
    }
    detail::fill_ratios(rep.grid);
    detail::fill_ratios(rep.bank);
    return rep;
}

inline nlohmann::json to_json(const BenchReport& r) {
    using nlohmann::json;
    auto table = [](const std::vector<BenchPoint>& pts, const char* size_key) {
        json a = json::array();
        for (const auto& p : pts)
            a.push_back({{size_key, p.size}, {"elements", p.elements}, {"median_ns", p.median_ns}, {"ratio", p.ratio}});
        return a;
    };
    return json{{"config",
                 {{"grid_sides", r.config.grid_sides},
                  {"bank_sizes", r.config.bank_sizes},
                  {"trials", r.config.trials},
                  {"channels", r.config.channels},
                  {"grid_queries", r.config.grid_queries},
                  {"bank_queries", r.config.bank_queries},
                  {"seed", r.config.seed}}},
                {"grid", table(r.grid, "side")},
                {"bank", table(r.bank, "entries")},
                {"grid_ratio", r.grid_ratio()},
                {"bank_ratio", r.bank_ratio()},
                {"machine",
                 {{"cpu", r.machine.cpu},
                  {"hardware_threads", r.machine.hardware_threads},
                  {"compiler", r.machine.compiler},
                  {"build", r.machine.build}}}};
}

inline std::string to_csv(const BenchReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "kind,size,elements,median_ns,ratio\n";
    for (const auto& p : r.grid) os << "grid," << p.size << ',' << p.elements << ',' << p.median_ns << ',' << p.ratio << '\n';
    for (const auto& p : r.bank) os << "bank," << p.size << ',' << p.elements << ',' << p.median_ns << ',' << p.ratio << '\n';
    return os.str();
}

}  // namespace grad
