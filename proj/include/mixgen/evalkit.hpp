#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mixgen/seqformat.hpp"

namespace mixgen {

using Coords = std::vector<Vec3>;

// Minimal RMSD over proper rotations and translations. Throws SizeMismatch.
double kabsch_rmsd(std::span<const Vec3> a, std::span<const Vec3> b);

struct CovMat {
    double cov = 0, mat = 0;      // recall: over references
    double cov_p = 0, mat_p = 0;  // precision: over generated
};

// rmsd[g][r] between generated g and reference r. Throws EmptySet.
CovMat cov_mat_from_rmsd(const std::vector<std::vector<double>>& rmsd, double delta);
CovMat cov_mat(const std::vector<Coords>& generated, const std::vector<Coords>& reference, double delta = 0.5);

struct MatchTolerance {
    double stol = 0.5;
    double angle_tol = 10.0;  // degrees
    double ltol = 0.3;        // relative
};

struct MatchResult {
    bool matched = false;
    double rmsd = std::numeric_limits<double>::infinity();  // normalized by (V/n)^(1/3)
};

// Lattice lengths within ltol relative to their mean, angles ±angle_tol, then the best
// same-element assignment over periodic translations. Throws CompositionMismatch.
MatchResult match_structures(const Material& gen, const Material& ref, const MatchTolerance& tol = {});

// (a, b, c, alpha, beta, gamma) with angles in degrees.
std::array<double, 6> lattice_parameters(const Mat3& lattice);
double lattice_volume(const Mat3& lattice);
// Cube root of the cell volume.
double lattice_scale(const Mat3& lattice);

// Optimal assignment minimizing total cost on a square matrix; returns the
// column assigned to each row.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

// 1-D Wasserstein-1 distance between empirical samples. Throws EmptySet.
double wdist_1d(std::span<const double> a, std::span<const double> b);

struct FreeEnergySurface {
    int bins = 0;
    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    std::vector<double> F;  // bins*bins, row = x bin

    double at(int ix, int iy) const { return F[static_cast<std::size_t>(ix * bins + iy)]; }
};

// F = -kT ln(P + 1e-12) over a bins x bins histogram, shifted so min F = 0,
// values above `cap` clipped to it. Throws EmptySet, BadRange.
FreeEnergySurface free_energy_surface(std::span<const std::array<double, 2>> points, int bins, double kT,
                                      double cap = std::numeric_limits<double>::infinity());
std::string to_csv(const FreeEnergySurface& fes);

enum class ToyFamily { Crystal, Molecule, Conditional };

struct ToySpec {
    ToyFamily family = ToyFamily::Crystal;
    int K = 4;
    double sigma = 0.02;
    int min_sites = 2;
    int max_sites = 6;
    std::int64_t count = 1000;
    std::uint64_t seed = 0;
};

// Throws BadSpec.
std::vector<DomainRecord> make_toy_dataset(const ToySpec& spec);

// Pseudo-element alphabet of the toy families (first K are used).
std::span<const std::string> toy_elements();
// Lattice edge of the toy-crystal family for a canonical composition.
double toy_crystal_scale(std::span<const std::string> sites);
// Noiseless fractional position of canonical site i among n.
Vec3 toy_template(int i, int n);
// Composition key, e.g. "Li2O1".
std::string composition_key(std::span<const std::string> sites);

}  // namespace mixgen
