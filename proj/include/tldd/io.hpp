#pragma once

#include "tldd/common.hpp"
#include "tldd/dd_solver.hpp"
#include "tldd/experiments.hpp"
#include "tldd/fem.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace tldd {

inline constexpr const char* kRecordsHeader =
    "case_id,dim,m,h_ratio,kappa_ratio,theta,rho_measured,rho_predicted,iterations,converged,time_s";
inline constexpr const char* kFitsHeader = "case_id,a0,a1,b0,b1,b2,C_tilde";

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream os(p);
    TLDD_THROW_IF(!os, ErrorCode::IoError, "cannot open '" + p.string() + "' for writing");
    os.precision(17);
    return os;
}

inline std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

} // namespace detail

inline void write_records_csv(std::ostream& os, std::span<const SweepRecord> records)
{
    os.precision(17);
    os << kRecordsHeader << '\n';
    for (const auto& r : records)
        os << r.case_id << ',' << r.dim << ',' << r.m << ',' << r.h_ratio << ',' << r.kappa_ratio << ',' << r.theta
           << ',' << r.rho_measured << ',' << r.rho_predicted << ',' << r.iterations << ','
           << (r.converged ? 1 : 0) << ',' << r.time_s << '\n';
}

inline std::vector<SweepRecord> read_records_csv(std::istream& is)
{
    std::string line;
    TLDD_THROW_IF(!std::getline(is, line) || line != kRecordsHeader, ErrorCode::IoError, "bad records header");
    std::vector<SweepRecord> out;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        const auto c = detail::split_csv(line);
        TLDD_THROW_IF(c.size() != 11, ErrorCode::IoError, "records row needs 11 fields");
        SweepRecord r;
        r.case_id = c[0];
        r.dim = std::stoi(c[1]);
        r.m = std::stoi(c[2]);
        r.h_ratio = std::stod(c[3]);
        r.kappa_ratio = std::stod(c[4]);
        r.theta = std::stod(c[5]);
        r.rho_measured = std::stod(c[6]);
        r.rho_predicted = std::stod(c[7]);
        r.iterations = std::stoi(c[8]);
        r.converged = c[9] == "1";
        r.status = r.converged ? DDStatus::Converged : DDStatus::MaxIters;
        r.time_s = std::stod(c[10]);
        out.push_back(r);
    }
    return out;
}

struct NamedFit {
    std::string case_id;
    SpectralFit fit;
};

inline void write_fits_csv(std::ostream& os, std::span<const NamedFit> fits)
{
    os.precision(17);
    os << kFitsHeader << '\n';
    for (const auto& [id, f] : fits)
        os << id << ',' << f.a0 << ',' << f.a1 << ',' << f.b0 << ',' << f.b1 << ',' << f.b2 << ',' << f.C_tilde
           << '\n';
}

/// records.csv, fits.csv and manifest.json under outdir.
inline void emit_reports(std::span<const SweepRecord> records, std::span<const NamedFit> fits,
                         const nlohmann::json& manifest, const std::filesystem::path& outdir)
{
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    TLDD_THROW_IF(ec, ErrorCode::IoError, "cannot create '" + outdir.string() + "': " + ec.message());
    auto rec = detail::open_out(outdir / "records.csv");
    write_records_csv(rec, records);
    auto fit = detail::open_out(outdir / "fits.csv");
    write_fits_csv(fit, fits);
    auto man = detail::open_out(outdir / "manifest.json");
    man << manifest.dump(2) << '\n';
    TLDD_THROW_IF(!rec || !fit || !man, ErrorCode::IoError, "write failed under '" + outdir.string() + "'");
}

inline nlohmann::json to_json(const ExperimentConfig& c)
{
    nlohmann::json j;
    j["dim"] = c.geom.dim;
    j["L"] = c.geom.L;
    j["H"] = c.geom.H;
    j["W"] = c.geom.W;
    j["H_minus"] = c.geom.H_minus;
    j["m"] = c.m;
    j["h_plus"] = c.h_plus;
    j["h_minus"] = c.h_minus;
    j["kappa_plus"] = c.kappa_plus;
    j["kappa_minus"] = c.kappa_minus;
    j["theta"] = c.theta;
    j["alpha_factor"] = c.alpha_factor;
    if (c.alpha)
        j["alpha"] = *c.alpha;
    j["tol"] = c.dd.tol;
    j["max_iters"] = c.dd.max_iters;
    j["divergence_guard"] = c.dd.divergence_guard;
    j["solver"] = to_string(c.dd.inner.method);
    j["solver_rel_tol"] = c.dd.inner.rel_tol;
    j["solver_max_iters"] = c.dd.inner.max_iters;
    j["power_tol"] = c.power_tol;
    j["power_max_iters"] = c.power_max_iters;
    j["seed"] = c.seed;
    j["refinement"] = to_string(c.refinement);
    j["output_dir"] = c.output_dir;
    return j;
}

/// Keys mirror ExperimentConfig fields; absent keys keep their defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {})
{
    static const std::vector<std::string> known{
        "dim", "L", "H", "W", "H_minus", "m", "h_plus", "h_minus", "kappa_plus", "kappa_minus", "theta",
        "alpha_factor", "alpha", "tol", "max_iters", "divergence_guard", "solver", "solver_rel_tol",
        "solver_max_iters", "power_tol", "power_max_iters", "seed", "refinement", "output_dir"};
    for (const auto& [k, v] : j.items())
        TLDD_THROW_IF(std::find(known.begin(), known.end(), k) == known.end(), ErrorCode::InvalidConfig,
                      "unknown config key '" + k + "'");
    try {
        c.geom.dim = j.value("dim", c.geom.dim);
        c.geom.L = j.value("L", c.geom.L);
        c.geom.H = j.value("H", c.geom.H);
        c.geom.W = j.value("W", c.geom.W);
        c.geom.H_minus = j.value("H_minus", c.geom.H_minus);
        c.m = j.value("m", c.m);
        c.h_plus = j.value("h_plus", c.h_plus);
        c.h_minus = j.value("h_minus", c.h_minus);
        c.kappa_plus = j.value("kappa_plus", c.kappa_plus);
        c.kappa_minus = j.value("kappa_minus", c.kappa_minus);
        c.theta = j.value("theta", c.theta);
        c.alpha_factor = j.value("alpha_factor", c.alpha_factor);
        if (j.contains("alpha"))
            c.alpha = j.at("alpha").get<Real>();
        c.dd.tol = j.value("tol", c.dd.tol);
        c.dd.max_iters = j.value("max_iters", c.dd.max_iters);
        c.dd.divergence_guard = j.value("divergence_guard", c.dd.divergence_guard);
        if (j.contains("solver"))
            c.dd.inner.method = parse_solver_method(j.at("solver").get<std::string>());
        c.dd.inner.rel_tol = j.value("solver_rel_tol", c.dd.inner.rel_tol);
        c.dd.inner.max_iters = j.value("solver_max_iters", c.dd.inner.max_iters);
        c.power_tol = j.value("power_tol", c.power_tol);
        c.power_max_iters = j.value("power_max_iters", c.power_max_iters);
        c.seed = j.value("seed", c.seed);
        if (j.contains("refinement"))
            c.refinement = parse_refinement_mode(j.at("refinement").get<std::string>());
        c.output_dir = j.value("output_dir", c.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json to_json(const DDReport& r)
{
    nlohmann::json j;
    j["status"] = to_string(r.status);
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["residual_history"] = r.residual_history;
    j["change_history"] = r.change_history;
    j["rho_estimate"] = r.rho_estimate ? nlohmann::json(*r.rho_estimate) : nlohmann::json(nullptr);
    j["local_inner_iterations"] = r.local_inner_iterations;
    j["global_inner_iterations"] = r.global_inner_iterations;
    j["time_s"] = r.time_s;
    j["n_plus"] = r.T_plus.size();
    j["n_minus"] = r.T_minus.size();
    return j;
}

/// One line per dof: index, coordinates, value.
template <int Dim>
void write_solution_csv(std::ostream& os, const DofMap<Dim>& dm, const DenseVector& u)
{
    TLDD_THROW_IF(u.size() != dm.n_dofs, ErrorCode::DimensionMismatch, "solution size mismatch");
    os << (Dim == 2 ? "dof,x,y,value\n" : "dof,x,y,z,value\n");
    os.precision(17);
    for (int i = 0; i < dm.n_dofs; ++i) {
        os << i;
        for (int d = 0; d < Dim; ++d)
            os << ',' << dm.dof_coords[i][d];
        os << ',' << u[i] << '\n';
    }
}

/// Coordinate-format MatrixMarket dump (1-based indices).
inline void write_matrix_market(std::ostream& os, const SparseMatrix& A)
{
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
    os.precision(17);
    for (int r = 0; r < A.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(A, r); it; ++it)
            os << r + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

} // namespace tldd
