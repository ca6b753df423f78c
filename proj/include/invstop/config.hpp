#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "invstop/barrier.hpp"
#include "invstop/boundary.hpp"
#include "invstop/model.hpp"
#include "invstop/paths.hpp"
#include "invstop/transfer.hpp"

namespace invstop {

struct SimulateSection {
    long n_paths = 10;
    double t0 = 0.0;
    std::optional<double> x0;  // defaults to b(t0)
    ReflectionScheme scheme = ReflectionScheme::projected;
};

struct TransferSection {
    Eigen::VectorXd times;
    bool closed_form = false;
};

struct LatticeSection {
    double dt = 1e-3;
    double dx = 0.04;
    std::optional<double> x_min, x_max;
};

enum class VerifyTransfer { zero, computed, file };

struct VerifySection {
    VerifyTransfer transfer = VerifyTransfer::zero;
    std::string transfer_file;
    int transfer_count = 41;
    double tol = 0.01;
    bool strict = false;
    bool write_surface = false;
};

struct PropertiesSection {
    int coarse = 20;
    double refine_step = 0.01;
};

/// Everything a CLI run needs, with defaults filled in.
struct RunConfig {
    std::optional<Problem> problem;
    std::optional<Barrier> barrier;
    std::uint64_t seed = 0;
    MCConfig mc;
    SimulateSection simulate;
    TransferSection transfer;
    SolverConfig solver;
    LatticeSection lattice;
    VerifySection verify;
    PropertiesSection properties;
    /// The input with every default made explicit, as JSON text.
    std::string resolved_json;
};

/// Parses a JSON run configuration. Relative barrier paths are resolved
/// against `base_dir`. Throws ConfigError with the line or field at fault.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {},
                       std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_config(const std::filesystem::path& path,
                      std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace invstop
