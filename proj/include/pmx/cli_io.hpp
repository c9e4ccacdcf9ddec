#pragma once

#include <string>
#include <vector>

#include "pmx/dynamics.hpp"
#include "pmx/field.hpp"

namespace pmx {

/// Configuration, snapshot, and diagnostics serialization.  These formats are
/// the repository's bit-exact public surface: plain text for configs and CSV
/// (human-diffable, golden-testable), raw little-endian binary for field
/// snapshots (exact round trips).

// ---- config files ----------------------------------------------------------

/// Parsed simulation setup plus its canonical echo.  `resolved` lists every
/// effective key in a fixed order with full-precision values, including the
/// defaults applied for omitted keys, so two configs can be diffed after
/// normalization and golden files stay stable.
struct ParsedConfig {
    SimulationConfig cfg;
    std::string resolved;
};

/// Parses the line-oriented `key = value` grammar.  `[section]` headers set a
/// prefix for the keys that follow; a dotted key is absolute regardless of the
/// current section.  `#` starts a comment, blank lines are skipped, booleans
/// are the literals true/false, and numbers are float64.  Unknown keys,
/// malformed values, and missing required keys (grid.n, grid.L, scenario.id)
/// raise ConfigError naming the line.
ParsedConfig parse_config(const std::string& text);

/// File wrapper; unreadable paths raise IOError.
ParsedConfig parse_config_file(const std::string& path);

/// Canonical full-precision echo of a config (the `resolved` member above).
std::string resolved_dump(const SimulationConfig& cfg);

// ---- snapshots -------------------------------------------------------------

enum class SnapshotKind { scalar, vector, spinor };

struct SnapshotMeta {
    std::string name;
    SnapshotKind kind = SnapshotKind::scalar;
    std::array<int, 3> n{0, 0, 0};
    std::array<double, 3> box{0.0, 0.0, 0.0};
    double time = 0.0;
    PhysicalConstants constants;
};

/// Snapshot container; the member matching meta.kind is the live one.
struct Snapshot {
    SnapshotMeta meta;
    RealScalarField scalar;
    RealVectorField vector;
    SpinorField spinor;
};

/// Writes one field as a PMX1 snapshot: a text header (magic, name, kind,
/// grid, box, time, constants) closed by a blank line, then a sentinel double
/// 1.0 followed by the payload as raw little-endian float64 in x-fastest
/// order.  Vector and spinor components are stored as consecutive full-grid
/// blocks; complex values as (re, im) pairs.  Write errors raise IOError.
void write_snapshot(const std::string& path, const RealScalarField& f,
                    const std::string& name, double time, const PhysicalConstants& pc);
void write_snapshot(const std::string& path, const RealVectorField& f,
                    const std::string& name, double time, const PhysicalConstants& pc);
void write_snapshot(const std::string& path, const SpinorField& f,
                    const std::string& name, double time, const PhysicalConstants& pc);

/// Reads a snapshot back; the round trip through write_snapshot is
/// bit-identical.  Magic mismatch, malformed headers, sentinel mismatch
/// (endianness or corruption), truncated payloads, and grid overflow raise
/// IOError naming the byte offset where the file stopped making sense.
Snapshot read_snapshot(const std::string& path);

// ---- diagnostics CSV -------------------------------------------------------

/// Versioned two-line prologue: a `# pmx diagnostics v1` marker and the fixed
/// column header.  Readers reject files whose prologue differs.
std::string diagnostics_prologue();

/// One CSV row, full precision, no trailing newline.
std::string diagnostics_row(const DiagnosticsSample& d);

void write_diagnostics_csv(const std::string& path,
                           const std::vector<DiagnosticsSample>& rows);
std::vector<DiagnosticsSample> read_diagnostics_csv(const std::string& path);

// ---- run orchestration -----------------------------------------------------

/// Runs the configured simulation and writes, under cfg.output_dir:
///   resolved_config.txt            the canonical echo
///   diagnostics.csv                one row per recorded step, streamed
///   orb<k>_step<NNNNNN>.pmx        every orbital at each recorded step
///   phi0_step<NNNNNN>.pmx          the leading scalar potential
/// Directory creation or write failures raise IOError.
SimulationState run_and_write(const SimulationConfig& cfg);

}  // namespace pmx
