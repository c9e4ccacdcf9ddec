#include "pmx/cli_io.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pmx/errors.hpp"

namespace pmx {
namespace {

// ---- formatting ------------------------------------------------------------

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_triple(const std::array<double, 3>& v) {
    return fmt_g(v[0]) + " " + fmt_g(v[1]) + " " + fmt_g(v[2]);
}

std::string fmt_triple(const std::array<int, 3>& v) {
    return std::to_string(v[0]) + " " + std::to_string(v[1]) + " " + std::to_string(v[2]);
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// ---- config parsing --------------------------------------------------------

[[noreturn]] void fail_line(int line, const std::string& msg) {
    throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

double parse_number(int line, const std::string& key, const std::string& token) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || token.empty())
        fail_line(line, "malformed value for '" + key + "' ('" + token +
                            "'): expected a number");
    if (errno == ERANGE || !std::isfinite(v))
        fail_line(line, "value for '" + key + "' ('" + token + "') is not a finite number");
    return v;
}

std::vector<double> parse_numbers(int line, const std::string& key,
                                  const std::string& value) {
    std::vector<double> out;
    std::istringstream is(value);
    std::string token;
    while (is >> token) out.push_back(parse_number(line, key, token));
    if (out.empty()) fail_line(line, "empty value for '" + key + "'");
    return out;
}

long long parse_integer(int line, const std::string& key, double v) {
    if (v != std::floor(v) || std::abs(v) > 2147483647.0)
        fail_line(line, "value for '" + key + "' must be an integer");
    return static_cast<long long>(v);
}

bool parse_bool(int line, const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    fail_line(line, "malformed value for '" + key + "' ('" + value +
                        "'): expected true or false");
}

struct KeyedValue {
    int line;
    std::string value;
};

}  // namespace

ParsedConfig parse_config(const std::string& text) {
    SimulationConfig cfg;
    std::map<std::string, KeyedValue> seen;  // full key -> first definition
    std::map<int, KeyedValue> nuclei_raw;    // 1-based index -> value

    std::istringstream stream(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    int last_line = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        last_line = line_no;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                fail_line(line_no, "malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail_line(line_no, "empty section name");
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail_line(line_no, "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail_line(line_no, "missing key before '='");
        if (value.empty()) fail_line(line_no, "empty value for '" + key + "'");

        // A dotted key is absolute; a bare key picks up the section prefix.
        const std::string full =
            key.find('.') != std::string::npos
                ? key
                : (section.empty() ? key : section + "." + key);

        if (full.rfind("nuclei.", 0) == 0) {
            const std::string idx_text = full.substr(7);
            const long long idx =
                parse_integer(line_no, full, parse_number(line_no, full, idx_text));
            if (idx < 1) fail_line(line_no, "nucleus index in '" + full + "' must be >= 1");
            auto [it, fresh] = nuclei_raw.emplace(static_cast<int>(idx),
                                                  KeyedValue{line_no, value});
            if (!fresh)
                fail_line(line_no, "duplicate key '" + full + "' (first set at line " +
                                       std::to_string(it->second.line) + ")");
            continue;
        }

        auto [it, fresh] = seen.emplace(full, KeyedValue{line_no, value});
        if (!fresh)
            fail_line(line_no, "duplicate key '" + full + "' (first set at line " +
                                   std::to_string(it->second.line) + ")");
    }

    // Handlers consume recognized keys; whatever remains is unknown.
    auto take = [&](const char* key) -> const KeyedValue* {
        const auto it = seen.find(key);
        return it == seen.end() ? nullptr : &it->second;
    };
    auto numbers = [&](const KeyedValue& kv, const char* key, std::size_t lo,
                       std::size_t hi) {
        auto v = parse_numbers(kv.line, key, kv.value);
        if (v.size() < lo || v.size() > hi)
            fail_line(kv.line, std::string("'") + key + "' takes " +
                                   (lo == hi ? std::to_string(lo)
                                             : std::to_string(lo) + " to " +
                                                   std::to_string(hi)) +
                                   " number(s), got " + std::to_string(v.size()));
        return v;
    };

    std::vector<std::string> consumed;
    auto use = [&](const char* key, const std::function<void(const KeyedValue&)>& fn) {
        if (const KeyedValue* kv = take(key)) fn(*kv);
        consumed.push_back(key);
    };

    bool has_grid_n = false, has_grid_l = false, has_scenario_id = false;

    use("grid.n", [&](const KeyedValue& kv) {
        const auto v = numbers(kv, "grid.n", 1, 3);
        if (v.size() == 2) fail_line(kv.line, "'grid.n' takes one or three numbers");
        for (int c = 0; c < 3; ++c) {
            const long long n = parse_integer(kv.line, "grid.n", v[v.size() == 1 ? 0 : c]);
            if (n < 2) fail_line(kv.line, "'grid.n' must be at least 2 per axis");
            cfg.grid_n[c] = static_cast<int>(n);
        }
        has_grid_n = true;
    });
    use("grid.L", [&](const KeyedValue& kv) {
        const auto v = numbers(kv, "grid.L", 1, 3);
        if (v.size() == 2) fail_line(kv.line, "'grid.L' takes one or three numbers");
        for (int c = 0; c < 3; ++c) {
            const double L = v[v.size() == 1 ? 0 : c];
            if (L <= 0.0) fail_line(kv.line, "'grid.L' must be positive");
            cfg.box[c] = L;
        }
        has_grid_l = true;
    });
    use("constants.c", [&](const KeyedValue& kv) {
        const double c = numbers(kv, "constants.c", 1, 1)[0];
        if (c <= 0.0) fail_line(kv.line, "'constants.c' must be positive");
        cfg.constants.c = c;
    });
    use("model.variant", [&](const KeyedValue& kv) {
        if (kv.value == "minimal") cfg.variant = Variant::minimal;
        else if (kv.value == "full_internal") cfg.variant = Variant::full_internal;
        else if (kv.value == "with_external") cfg.variant = Variant::with_external;
        else
            fail_line(kv.line, "malformed value for 'model.variant' ('" + kv.value +
                                   "'): expected minimal, full_internal, or with_external");
    });
    use("model.neglect_self_a2", [&](const KeyedValue& kv) {
        cfg.neglect_self_A_in_corrections =
            parse_bool(kv.line, "model.neglect_self_a2", kv.value);
    });
    use("time.dt", [&](const KeyedValue& kv) {
        cfg.dt = numbers(kv, "time.dt", 1, 1)[0];
        if (cfg.dt <= 0.0) fail_line(kv.line, "'time.dt' must be positive");
    });
    use("time.steps", [&](const KeyedValue& kv) {
        const long long n =
            parse_integer(kv.line, "time.steps", numbers(kv, "time.steps", 1, 1)[0]);
        if (n < 0) fail_line(kv.line, "'time.steps' must be nonnegative");
        cfg.n_steps = static_cast<int>(n);
    });
    use("selfconsistency.mode", [&](const KeyedValue& kv) {
        if (kv.value == "lagged") cfg.mode = SelfConsistency::lagged;
        else if (kv.value == "one_corrector") cfg.mode = SelfConsistency::one_corrector;
        else
            fail_line(kv.line, "malformed value for 'selfconsistency.mode' ('" + kv.value +
                                   "'): expected lagged or one_corrector");
    });
    use("scenario.id", [&](const KeyedValue& kv) {
        cfg.scenario.id = kv.value;
        has_scenario_id = true;
    });
    use("scenario.sigma", [&](const KeyedValue& kv) {
        cfg.scenario.sigma = numbers(kv, "scenario.sigma", 1, 1)[0];
        if (cfg.scenario.sigma <= 0.0)
            fail_line(kv.line, "'scenario.sigma' must be positive");
    });
    use("scenario.k0", [&](const KeyedValue& kv) {
        const auto v = numbers(kv, "scenario.k0", 3, 3);
        for (int c = 0; c < 3; ++c)
            cfg.scenario.k0[c] =
                static_cast<int>(parse_integer(kv.line, "scenario.k0", v[c]));
    });
    use("scenario.spin", [&](const KeyedValue& kv) {
        const auto v = numbers(kv, "scenario.spin", 3, 3);
        for (int c = 0; c < 3; ++c) cfg.scenario.spin[c] = v[c];
    });
    use("scenario.b_field", [&](const KeyedValue& kv) {
        const auto v = numbers(kv, "scenario.b_field", 3, 3);
        for (int c = 0; c < 3; ++c) cfg.scenario.b_field[c] = v[c];
    });
    use("scenario.n_orbitals", [&](const KeyedValue& kv) {
        const long long n = parse_integer(kv.line, "scenario.n_orbitals",
                                          numbers(kv, "scenario.n_orbitals", 1, 1)[0]);
        if (n < 1) fail_line(kv.line, "'scenario.n_orbitals' must be at least 1");
        cfg.scenario.n_orbitals = static_cast<int>(n);
    });
    use("scenario.imag_time_dt", [&](const KeyedValue& kv) {
        cfg.scenario.imag_time_dt = numbers(kv, "scenario.imag_time_dt", 1, 1)[0];
        if (cfg.scenario.imag_time_dt <= 0.0)
            fail_line(kv.line, "'scenario.imag_time_dt' must be positive");
    });
    use("scenario.imag_time_steps", [&](const KeyedValue& kv) {
        const long long n = parse_integer(kv.line, "scenario.imag_time_steps",
                                          numbers(kv, "scenario.imag_time_steps", 1, 1)[0]);
        if (n < 1) fail_line(kv.line, "'scenario.imag_time_steps' must be at least 1");
        cfg.scenario.imag_time_steps = static_cast<int>(n);
    });
    use("laser.amplitude", [&](const KeyedValue& kv) {
        cfg.laser.amplitude = numbers(kv, "laser.amplitude", 1, 1)[0];
    });
    use("laser.omega", [&](const KeyedValue& kv) {
        cfg.laser.omega = numbers(kv, "laser.omega", 1, 1)[0];
    });
    use("laser.duration", [&](const KeyedValue& kv) {
        cfg.laser.duration = numbers(kv, "laser.duration", 1, 1)[0];
        if (cfg.laser.duration < 0.0)
            fail_line(kv.line, "'laser.duration' must be nonnegative");
    });
    use("laser.polarization", [&](const KeyedValue& kv) {
        const auto v = numbers(kv, "laser.polarization", 3, 3);
        for (int c = 0; c < 3; ++c) cfg.laser.polarization[c] = v[c];
    });
    use("output.dir", [&](const KeyedValue& kv) { cfg.output_dir = kv.value; });
    use("output.cadence", [&](const KeyedValue& kv) {
        const long long n = parse_integer(kv.line, "output.cadence",
                                          numbers(kv, "output.cadence", 1, 1)[0]);
        if (n < 0) fail_line(kv.line, "'output.cadence' must be nonnegative");
        cfg.output_cadence = static_cast<int>(n);
    });

    for (const auto& [key, kv] : seen) {
        bool known = false;
        for (const std::string& k : consumed)
            if (k == key) { known = true; break; }
        if (!known) fail_line(kv.line, "unknown key '" + key + "'");
    }

    // nuclei.K: x y z [charge [softening]], indices contiguous from 1.
    int expect = 1;
    for (const auto& [idx, kv] : nuclei_raw) {
        if (idx != expect)
            fail_line(kv.line, "nucleus indices must be contiguous from 1; expected "
                                   "nuclei." + std::to_string(expect) + ", got nuclei." +
                                   std::to_string(idx));
        ++expect;
        const std::string key = "nuclei." + std::to_string(idx);
        const auto v = parse_numbers(kv.line, key, kv.value);
        if (v.size() < 3 || v.size() > 5)
            fail_line(kv.line, "'" + key + "' takes 'x y z [charge [softening]]', got " +
                                   std::to_string(v.size()) + " number(s)");
        Nucleus nuc;
        nuc.position = {v[0], v[1], v[2]};
        if (v.size() >= 4) nuc.charge = v[3];
        if (v.size() == 5) {
            if (v[4] < 0.0) fail_line(kv.line, "'" + key + "' softening must be >= 0");
            nuc.softening = v[4];
        }
        cfg.nuclei.push_back(nuc);
    }

    const auto require = [&](bool have, const char* key) {
        if (!have)
            throw ConfigError("line " + std::to_string(last_line) +
                              " (end of input): missing required key '" +
                              std::string(key) + "'");
    };
    require(has_grid_n, "grid.n");
    require(has_grid_l, "grid.L");
    require(has_scenario_id, "scenario.id");

    return {cfg, resolved_dump(cfg)};
}

ParsedConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOError("cannot open config file '" + path + "'");
    std::ostringstream body;
    body << in.rdbuf();
    if (in.bad()) throw IOError("read failure on config file '" + path + "'");
    return parse_config(body.str());
}

std::string resolved_dump(const SimulationConfig& cfg) {
    std::ostringstream os;
    os << "grid.n = " << fmt_triple(cfg.grid_n) << '\n';
    os << "grid.L = " << fmt_triple(cfg.box) << '\n';
    os << "constants.c = " << fmt_g(cfg.constants.c) << '\n';
    os << "model.variant = "
       << (cfg.variant == Variant::minimal
               ? "minimal"
               : cfg.variant == Variant::full_internal ? "full_internal" : "with_external")
       << '\n';
    os << "model.neglect_self_a2 = "
       << (cfg.neglect_self_A_in_corrections ? "true" : "false") << '\n';
    os << "selfconsistency.mode = "
       << (cfg.mode == SelfConsistency::lagged ? "lagged" : "one_corrector") << '\n';
    os << "time.dt = " << fmt_g(cfg.dt) << '\n';
    os << "time.steps = " << cfg.n_steps << '\n';
    os << "scenario.id = " << cfg.scenario.id << '\n';
    os << "scenario.sigma = " << fmt_g(cfg.scenario.sigma) << '\n';
    os << "scenario.k0 = " << fmt_triple(cfg.scenario.k0) << '\n';
    os << "scenario.spin = " << fmt_triple(cfg.scenario.spin) << '\n';
    os << "scenario.b_field = " << fmt_triple(cfg.scenario.b_field) << '\n';
    os << "scenario.n_orbitals = " << cfg.scenario.n_orbitals << '\n';
    os << "scenario.imag_time_dt = " << fmt_g(cfg.scenario.imag_time_dt) << '\n';
    os << "scenario.imag_time_steps = " << cfg.scenario.imag_time_steps << '\n';
    os << "laser.amplitude = " << fmt_g(cfg.laser.amplitude) << '\n';
    os << "laser.omega = " << fmt_g(cfg.laser.omega) << '\n';
    os << "laser.duration = " << fmt_g(cfg.laser.duration) << '\n';
    os << "laser.polarization = " << fmt_triple(cfg.laser.polarization) << '\n';
    for (std::size_t i = 0; i < cfg.nuclei.size(); ++i) {
        const Nucleus& nuc = cfg.nuclei[i];
        os << "nuclei." << i + 1 << " = " << fmt_triple(nuc.position) << ' '
           << fmt_g(nuc.charge) << ' ' << fmt_g(nuc.softening) << '\n';
    }
    os << "output.dir = " << cfg.output_dir << '\n';
    os << "output.cadence = " << cfg.output_cadence << '\n';
    return os.str();
}

// ---- snapshots -------------------------------------------------------------

namespace {

const char* kind_name(SnapshotKind k) {
    switch (k) {
        case SnapshotKind::scalar: return "scalar";
        case SnapshotKind::vector: return "vector";
        default: return "spinor";
    }
}

/// Doubles per grid point: vector components are real, spinor components
/// complex (re, im) pairs.
std::size_t doubles_per_point(SnapshotKind k) {
    switch (k) {
        case SnapshotKind::scalar: return 1;
        case SnapshotKind::vector: return 3;
        default: return 4;
    }
}

std::string header_text(const SnapshotMeta& m) {
    std::ostringstream os;
    os << "PMX1\n";
    os << "field " << m.name << '\n';
    os << "kind " << kind_name(m.kind) << '\n';
    os << "grid " << m.n[0] << ' ' << m.n[1] << ' ' << m.n[2] << '\n';
    os << "box " << fmt_g(m.box[0]) << ' ' << fmt_g(m.box[1]) << ' ' << fmt_g(m.box[2])
       << '\n';
    os << "time " << fmt_g(m.time) << '\n';
    const PhysicalConstants& pc = m.constants;
    os << "constants hbar=" << fmt_g(pc.hbar) << " mass=" << fmt_g(pc.mass)
       << " charge=" << fmt_g(pc.charge) << " c=" << fmt_g(pc.c)
       << " eps0=" << fmt_g(pc.eps0) << '\n';
    os << '\n';
    return os.str();
}

void write_snapshot_impl(const std::string& path, const SnapshotMeta& meta,
                         const std::vector<const double*>& blocks,
                         std::size_t block_doubles) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IOError("cannot open '" + path + "' for writing");
    const std::string header = header_text(meta);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    const double sentinel = 1.0;
    out.write(reinterpret_cast<const char*>(&sentinel), sizeof sentinel);
    for (const double* b : blocks)
        out.write(reinterpret_cast<const char*>(b),
                  static_cast<std::streamsize>(block_doubles * sizeof(double)));
    out.flush();
    if (!out) throw IOError("write failure on '" + path + "'");
}

SnapshotMeta make_meta(const Grid& g, SnapshotKind kind, const std::string& name,
                       double time, const PhysicalConstants& pc) {
    SnapshotMeta m;
    m.name = name;
    m.kind = kind;
    m.n = g.n();
    m.box = g.box();
    m.time = time;
    m.constants = pc;
    return m;
}

[[noreturn]] void fail_at(const std::string& path, std::size_t offset,
                          const std::string& msg) {
    throw IOError(path + ": " + msg + " at offset " + std::to_string(offset));
}

}  // namespace

void write_snapshot(const std::string& path, const RealScalarField& f,
                    const std::string& name, double time, const PhysicalConstants& pc) {
    write_snapshot_impl(path, make_meta(f.grid, SnapshotKind::scalar, name, time, pc),
                        {f.v.data()}, f.v.size());
}

void write_snapshot(const std::string& path, const RealVectorField& f,
                    const std::string& name, double time, const PhysicalConstants& pc) {
    write_snapshot_impl(path, make_meta(f.grid, SnapshotKind::vector, name, time, pc),
                        {f.comp[0].data(), f.comp[1].data(), f.comp[2].data()},
                        f.comp[0].size());
}

void write_snapshot(const std::string& path, const SpinorField& f,
                    const std::string& name, double time, const PhysicalConstants& pc) {
    // std::complex<double> is layout-compatible with double[2] = (re, im).
    write_snapshot_impl(path, make_meta(f.grid, SnapshotKind::spinor, name, time, pc),
                        {reinterpret_cast<const double*>(f.comp[0].data()),
                         reinterpret_cast<const double*>(f.comp[1].data())},
                        2 * f.comp[0].size());
}

Snapshot read_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOError("cannot open snapshot '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IOError("read failure on snapshot '" + path + "'");

    // Header: seven labeled lines closed by a blank one.
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos) fail_at(path, pos, "truncated header");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    if (next_line() != "PMX1") fail_at(path, 0, "not a PMX1 snapshot (magic mismatch)");

    Snapshot snap;
    SnapshotMeta& m = snap.meta;
    auto labeled = [&](const char* label) -> std::string {
        const std::size_t at = pos;
        const std::string line = next_line();
        const std::string prefix = std::string(label) + " ";
        if (line.rfind(prefix, 0) != 0)
            fail_at(path, at, "malformed header line '" + line + "' (expected '" +
                                  label + " ...')");
        return line.substr(prefix.size());
    };

    m.name = labeled("field");
    {
        const std::size_t at = pos;
        const std::string k = labeled("kind");
        if (k == "scalar") m.kind = SnapshotKind::scalar;
        else if (k == "vector") m.kind = SnapshotKind::vector;
        else if (k == "spinor") m.kind = SnapshotKind::spinor;
        else fail_at(path, at, "unknown snapshot kind '" + k + "'");
    }
    {
        const std::size_t at = pos;
        std::istringstream is(labeled("grid"));
        if (!(is >> m.n[0] >> m.n[1] >> m.n[2]))
            fail_at(path, at, "malformed grid line");
        for (int c = 0; c < 3; ++c)
            if (m.n[c] < 1) fail_at(path, at, "nonpositive grid dimension");
        // Catch payload-size overflow before allocating anything.
        const long long pts =
            static_cast<long long>(m.n[0]) * m.n[1] * m.n[2];
        if (pts > (1LL << 31))
            fail_at(path, at, "grid " + std::to_string(m.n[0]) + " " +
                                  std::to_string(m.n[1]) + " " + std::to_string(m.n[2]) +
                                  " overflows the payload size");
    }
    {
        const std::size_t at = pos;
        std::istringstream is(labeled("box"));
        if (!(is >> m.box[0] >> m.box[1] >> m.box[2]) || m.box[0] <= 0.0 ||
            m.box[1] <= 0.0 || m.box[2] <= 0.0)
            fail_at(path, at, "malformed box line");
    }
    {
        const std::size_t at = pos;
        std::istringstream is(labeled("time"));
        if (!(is >> m.time)) fail_at(path, at, "malformed time line");
    }
    {
        const std::size_t at = pos;
        std::istringstream is(labeled("constants"));
        std::string pair;
        while (is >> pair) {
            const std::size_t eq = pair.find('=');
            if (eq == std::string::npos)
                fail_at(path, at, "malformed constants entry '" + pair + "'");
            const std::string key = pair.substr(0, eq);
            const double v = std::strtod(pair.c_str() + eq + 1, nullptr);
            if (key == "hbar") m.constants.hbar = v;
            else if (key == "mass") m.constants.mass = v;
            else if (key == "charge") m.constants.charge = v;
            else if (key == "c") m.constants.c = v;
            else if (key == "eps0") m.constants.eps0 = v;
            else fail_at(path, at, "unknown constants entry '" + key + "'");
        }
    }
    if (!next_line().empty())
        fail_at(path, pos, "expected a blank line after the header");

    const std::size_t n_points =
        static_cast<std::size_t>(m.n[0]) * m.n[1] * m.n[2];
    const std::size_t payload_doubles = doubles_per_point(m.kind) * n_points;
    const std::size_t expected = (1 + payload_doubles) * sizeof(double);
    if (bytes.size() - pos < expected)
        fail_at(path, bytes.size(),
                "truncated payload: got " + std::to_string(bytes.size() - pos) + " of " +
                    std::to_string(expected) + " bytes");
    if (bytes.size() - pos > expected)
        fail_at(path, pos + expected,
                "trailing bytes after the payload (" +
                    std::to_string(bytes.size() - pos - expected) + " extra)");

    double sentinel = 0.0;
    std::memcpy(&sentinel, bytes.data() + pos, sizeof sentinel);
    if (sentinel != 1.0)
        fail_at(path, pos, "sentinel decode failed (endianness or corruption)");
    pos += sizeof sentinel;

    const Grid g(m.n, m.box);
    const auto block = [&](double* dst, std::size_t count) {
        std::memcpy(dst, bytes.data() + pos, count * sizeof(double));
        pos += count * sizeof(double);
    };
    switch (m.kind) {
        case SnapshotKind::scalar:
            snap.scalar = RealScalarField(g);
            block(snap.scalar.v.data(), n_points);
            break;
        case SnapshotKind::vector:
            snap.vector = RealVectorField(g);
            for (int c = 0; c < 3; ++c) block(snap.vector.comp[c].data(), n_points);
            break;
        case SnapshotKind::spinor:
            snap.spinor = SpinorField(g);
            for (int c = 0; c < 2; ++c)
                block(reinterpret_cast<double*>(snap.spinor.comp[c].data()), 2 * n_points);
            break;
    }
    return snap;
}

// ---- diagnostics CSV -------------------------------------------------------

std::string diagnostics_prologue() {
    return "# pmx diagnostics v1\n"
           "step,time,norm_total,energy_total,continuity_residual_l2,gauge_residual,"
           "poisson_subtracted_mean,sx,sy,sz,max_field_amplitude\n";
}

std::string diagnostics_row(const DiagnosticsSample& d) {
    std::ostringstream os;
    os << d.step << ',' << fmt_g(d.time) << ',' << fmt_g(d.norm_total) << ','
       << fmt_g(d.energy_total) << ',' << fmt_g(d.continuity_residual_l2) << ','
       << fmt_g(d.gauge_residual) << ',' << fmt_g(d.poisson_subtracted_mean) << ','
       << fmt_g(d.spin[0]) << ',' << fmt_g(d.spin[1]) << ',' << fmt_g(d.spin[2]) << ','
       << fmt_g(d.max_field_amplitude);
    return os.str();
}

void write_diagnostics_csv(const std::string& path,
                           const std::vector<DiagnosticsSample>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IOError("cannot open '" + path + "' for writing");
    out << diagnostics_prologue();
    for (const DiagnosticsSample& d : rows) out << diagnostics_row(d) << '\n';
    out.flush();
    if (!out) throw IOError("write failure on '" + path + "'");
}

std::vector<DiagnosticsSample> read_diagnostics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOError("cannot open '" + path + "'");
    std::string marker, header;
    if (!std::getline(in, marker) || !std::getline(in, header) ||
        marker + "\n" + header + "\n" != diagnostics_prologue())
        throw IOError(path + ": not a pmx diagnostics v1 file");

    std::vector<DiagnosticsSample> rows;
    std::string line;
    int line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream is(line);
        DiagnosticsSample d;
        if (!(is >> d.step >> d.time >> d.norm_total >> d.energy_total >>
              d.continuity_residual_l2 >> d.gauge_residual >> d.poisson_subtracted_mean >>
              d.spin[0] >> d.spin[1] >> d.spin[2] >> d.max_field_amplitude))
            throw IOError(path + ": malformed row at line " + std::to_string(line_no));
        rows.push_back(d);
    }
    return rows;
}

// ---- run orchestration -----------------------------------------------------

SimulationState run_and_write(const SimulationConfig& cfg) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec)
        throw IOError("cannot create output directory '" + cfg.output_dir +
                      "': " + ec.message());
    const fs::path dir(cfg.output_dir);

    {
        std::ofstream rc(dir / "resolved_config.txt", std::ios::trunc);
        rc << resolved_dump(cfg);
        rc.flush();
        if (!rc) throw IOError("write failure on '" + (dir / "resolved_config.txt").string() + "'");
    }

    std::ofstream csv(dir / "diagnostics.csv", std::ios::trunc);
    if (!csv) throw IOError("cannot open '" + (dir / "diagnostics.csv").string() + "'");
    csv << diagnostics_prologue();

    const RunObserver observer = [&](const SimulationState& st, const DiagnosticsSample& d) {
        csv << diagnostics_row(d) << '\n';
        csv.flush();
        if (!csv) throw IOError("write failure on the diagnostics stream");
        char tag[16];
        std::snprintf(tag, sizeof tag, "step%06d", d.step);
        for (std::size_t k = 0; k < st.orbitals.size(); ++k)
            write_snapshot((dir / ("orb" + std::to_string(k) + "_" + tag + ".pmx")).string(),
                           st.orbitals.orbitals[k].psi, "orbital_" + std::to_string(k),
                           d.time, cfg.constants);
        write_snapshot((dir / (std::string("phi0_") + tag + ".pmx")).string(), st.em.phi0,
                       "phi0", d.time, cfg.constants);
    };
    return run_selfconsistent(cfg, observer);
}

}  // namespace pmx
