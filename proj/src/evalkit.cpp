#include "mixgen/evalkit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "mixgen/conditioning.hpp"
#include "mixgen/error.hpp"

namespace mixgen {

double kabsch_rmsd(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.size() != b.size() || a.empty()) {
        throw Error(ErrorKind::SizeMismatch,
                    "kabsch_rmsd needs equal non-empty sets, got " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()));
    }
    // RMSD is symmetric; a fixed argument order makes it so bitwise too.
    if (std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end())) std::swap(a, b);
    const auto n = static_cast<Eigen::Index>(a.size());
    Eigen::MatrixX3d A(n, 3), B(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            A(i, c) = a[i][c];
            B(i, c) = b[i][c];
        }
    }
    A.rowwise() -= A.colwise().mean();
    B.rowwise() -= B.colwise().mean();
    const Eigen::Matrix3d cov = A.transpose() * B;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) D(2, 2) = -1;
    const Eigen::Matrix3d R = svd.matrixV() * D * svd.matrixU().transpose();
    const Eigen::MatrixX3d diff = (A * R.transpose()) - B;
    return std::sqrt(diff.squaredNorm() / double(n));
}

CovMat cov_mat_from_rmsd(const std::vector<std::vector<double>>& rmsd, double delta) {
    if (rmsd.empty() || rmsd[0].empty()) throw Error(ErrorKind::EmptySet, "COV/MAT needs non-empty sets");
    const std::size_t G = rmsd.size(), R = rmsd[0].size();
    CovMat out;
    for (std::size_t r = 0; r < R; ++r) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < G; ++g) best = std::min(best, rmsd[g][r]);
        out.cov += best < delta ? 1.0 : 0.0;
        out.mat += best;
    }
    out.cov /= double(R);
    out.mat /= double(R);
    for (std::size_t g = 0; g < G; ++g) {
        double best = *std::min_element(rmsd[g].begin(), rmsd[g].end());
        out.cov_p += best < delta ? 1.0 : 0.0;
        out.mat_p += best;
    }
    out.cov_p /= double(G);
    out.mat_p /= double(G);
    return out;
}

CovMat cov_mat(const std::vector<Coords>& generated, const std::vector<Coords>& reference, double delta) {
    if (generated.empty() || reference.empty()) throw Error(ErrorKind::EmptySet, "COV/MAT needs non-empty sets");
    std::vector<std::vector<double>> m(generated.size(), std::vector<double>(reference.size()));
    for (std::size_t g = 0; g < generated.size(); ++g)
        for (std::size_t r = 0; r < reference.size(); ++r) m[g][r] = kabsch_rmsd(generated[g], reference[r]);
    return cov_mat_from_rmsd(m, delta);
}

// ----------------------------------------------------------------------------
// Crystal matching

namespace {

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }
double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 to_cart(const Vec3& f, const Mat3& L) {
    Vec3 out{0, 0, 0};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out[c] += f[r] * L[r][c];
    return out;
}

Vec3 wrap_half(Vec3 d) {
    for (double& x : d) x -= std::round(x);
    return d;
}

}  // namespace

std::array<double, 6> lattice_parameters(const Mat3& L) {
    const double a = norm3(L[0]), b = norm3(L[1]), c = norm3(L[2]);
    auto angle = [](const Vec3& u, const Vec3& v, double nu, double nv) {
        double cosv = std::clamp(dot3(u, v) / (nu * nv), -1.0, 1.0);
        return std::acos(cosv) * 180.0 / std::numbers::pi;
    };
    return {a, b, c, angle(L[1], L[2], b, c), angle(L[0], L[2], a, c), angle(L[0], L[1], a, b)};
}

double lattice_volume(const Mat3& L) {
    return std::abs(L[0][0] * (L[1][1] * L[2][2] - L[1][2] * L[2][1]) -
                    L[0][1] * (L[1][0] * L[2][2] - L[1][2] * L[2][0]) +
                    L[0][2] * (L[1][0] * L[2][1] - L[1][1] * L[2][0]));
}

double lattice_scale(const Mat3& L) { return std::cbrt(lattice_volume(L)); }

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    // Shortest augmenting path with potentials, 1-based internally.
    const int n = static_cast<int>(cost.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assign(n);
    for (int j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
    return assign;
}

MatchResult match_structures(const Material& gen, const Material& ref, const MatchTolerance& tol) {
    auto sorted_sites = [](std::vector<std::string> s) {
        std::sort(s.begin(), s.end());
        return s;
    };
    if (gen.sites.size() != gen.frac_coords.size() || ref.sites.size() != ref.frac_coords.size() ||
        sorted_sites(gen.sites) != sorted_sites(ref.sites)) {
        throw Error(ErrorKind::CompositionMismatch,
                    "compositions differ: " + composition_key(gen.sites) + " vs " + composition_key(ref.sites));
    }
    MatchResult result;
    const auto pg = lattice_parameters(gen.lattice);
    const auto pr = lattice_parameters(ref.lattice);
    for (int k = 0; k < 3; ++k) {
        if (!(std::abs(pg[k] - pr[k]) <= tol.ltol * 0.5 * (pg[k] + pr[k]))) return result;
    }
    for (int k = 3; k < 6; ++k) {
        if (!(std::abs(pg[k] - pr[k]) <= tol.angle_tol)) return result;
    }
    const std::size_t n = ref.sites.size();
    Mat3 avg;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) avg[r][c] = 0.5 * (gen.lattice[r][c] + ref.lattice[r][c]);
    const double norm = std::cbrt(lattice_volume(avg) / double(n));

    std::map<std::string, std::vector<std::size_t>> by_g, by_r;
    for (std::size_t i = 0; i < n; ++i) {
        by_g[gen.sites[i]].push_back(i);
        by_r[ref.sites[i]].push_back(i);
    }
    // Translations pairing any two sites of the rarest element.
    std::string anchor = by_r.begin()->first;
    for (const auto& [el, idx] : by_r)
        if (idx.size() < by_r[anchor].size()) anchor = el;
    std::vector<Vec3> shifts;
    for (std::size_t i : by_g[anchor])
        for (std::size_t j : by_r[anchor])
            shifts.push_back({ref.frac_coords[j][0] - gen.frac_coords[i][0], ref.frac_coords[j][1] - gen.frac_coords[i][1],
                              ref.frac_coords[j][2] - gen.frac_coords[i][2]});

    for (const Vec3& t : shifts) {
        std::vector<Vec3> disp;
        for (const auto& [el, gi] : by_g) {
            const auto& ri = by_r[el];
            std::vector<std::vector<Vec3>> d(gi.size(), std::vector<Vec3>(ri.size()));
            std::vector<std::vector<double>> cost(gi.size(), std::vector<double>(ri.size()));
            for (std::size_t a = 0; a < gi.size(); ++a) {
                for (std::size_t b = 0; b < ri.size(); ++b) {
                    Vec3 f;
                    for (int c = 0; c < 3; ++c) f[c] = ref.frac_coords[ri[b]][c] - gen.frac_coords[gi[a]][c] - t[c];
                    d[a][b] = wrap_half(f);
                    const Vec3 x = to_cart(d[a][b], avg);
                    cost[a][b] = dot3(x, x);
                }
            }
            const auto assign = hungarian(cost);
            for (std::size_t a = 0; a < gi.size(); ++a) disp.push_back(d[a][assign[a]]);
        }
        Vec3 mean{0, 0, 0};
        for (const auto& f : disp)
            for (int c = 0; c < 3; ++c) mean[c] += f[c] / double(n);
        double ss = 0;
        for (const auto& f : disp) {
            const Vec3 x = to_cart({f[0] - mean[0], f[1] - mean[1], f[2] - mean[2]}, avg);
            ss += dot3(x, x);
        }
        const double rms = std::sqrt(ss / double(n)) / norm;
        if (rms < result.rmsd) result.rmsd = rms;
    }
    result.matched = result.rmsd < tol.stol;
    return result;
}

// ----------------------------------------------------------------------------

double wdist_1d(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw Error(ErrorKind::EmptySet, "wdist_1d needs non-empty samples");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    if (x.size() == y.size()) {
        double s = 0;
        for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
        return s / double(x.size());
    }
    // Integrate |Qx(q) - Qy(q)| over the merged quantile breakpoints.
    const double n = double(x.size()), m = double(y.size());
    std::size_t i = 0, j = 0;
    double q = 0, total = 0;
    while (i < x.size() && j < y.size()) {
        const double qi = double(i + 1) / n, qj = double(j + 1) / m;
        const double next = std::min(qi, qj);
        total += (next - q) * std::abs(x[i] - y[j]);
        q = next;
        if (qi <= next) ++i;
        if (qj <= next) ++j;
    }
    return total;
}

FreeEnergySurface free_energy_surface(std::span<const std::array<double, 2>> points, int bins, double kT,
                                      double cap) {
    if (points.empty()) throw Error(ErrorKind::EmptySet, "free energy surface needs points");
    if (bins < 1 || !(kT > 0)) throw Error(ErrorKind::BadRange, "free energy surface needs bins >= 1 and kT > 0");
    FreeEnergySurface fes;
    fes.bins = bins;
    fes.x_min = fes.x_max = points[0][0];
    fes.y_min = fes.y_max = points[0][1];
    for (const auto& p : points) {
        fes.x_min = std::min(fes.x_min, p[0]);
        fes.x_max = std::max(fes.x_max, p[0]);
        fes.y_min = std::min(fes.y_min, p[1]);
        fes.y_max = std::max(fes.y_max, p[1]);
    }
    auto bin_of = [bins](double v, double lo, double hi) {
        if (hi <= lo) return 0;
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        return std::clamp(b, 0, bins - 1);
    };
    std::vector<double> count(static_cast<std::size_t>(bins * bins), 0.0);
    for (const auto& p : points) count[bin_of(p[0], fes.x_min, fes.x_max) * bins + bin_of(p[1], fes.y_min, fes.y_max)] += 1;
    fes.F.resize(count.size());
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count.size(); ++k) {
        fes.F[k] = -kT * std::log(count[k] / double(points.size()) + 1e-12);
        lo = std::min(lo, fes.F[k]);
    }
    for (auto& f : fes.F) f = std::min(f - lo, cap);
    return fes;
}

std::string to_csv(const FreeEnergySurface& fes) {
    std::ostringstream os;
    os.precision(17);
    os << "x,y,F\n";
    const double dx = (fes.x_max - fes.x_min) / fes.bins, dy = (fes.y_max - fes.y_min) / fes.bins;
    for (int i = 0; i < fes.bins; ++i)
        for (int j = 0; j < fes.bins; ++j)
            os << fes.x_min + (i + 0.5) * dx << ',' << fes.y_min + (j + 0.5) * dy << ',' << fes.at(i, j) << '\n';
    return os.str();
}

// ----------------------------------------------------------------------------
// Toy families

std::span<const std::string> toy_elements() {
    static const std::vector<std::string> els{"Li", "O", "Mg", "S", "Fe", "Cu", "Na", "Cl"};
    return els;
}

namespace {

const std::vector<std::string>& toy_molecule_atoms() {
    static const std::vector<std::string> atoms{"C", "N", "O", "S"};
    return atoms;
}

double toy_volume(const std::string& el) {
    static const std::map<std::string, double> v{{"Li", 10}, {"O", 12}, {"Mg", 14}, {"S", 20},
                                                  {"Fe", 11}, {"Cu", 12}, {"Na", 18}, {"Cl", 22}};
    auto it = v.find(el);
    if (it == v.end()) throw Error(ErrorKind::BadSpec, "not a toy element: " + el);
    return it->second;
}

double wrap01(double x) {
    x -= std::floor(x);
    return x >= 1.0 ? 0.0 : x;
}

}  // namespace

double toy_crystal_scale(std::span<const std::string> sites) {
    double v = 0;
    for (const auto& s : sites) v += toy_volume(s);
    return 1.6 * std::cbrt(v);
}

Vec3 toy_template(int i, int n) {
    static const Vec3 corners[8] = {{0.25, 0.25, 0.25}, {0.75, 0.75, 0.75}, {0.75, 0.25, 0.25}, {0.25, 0.75, 0.75},
                                    {0.25, 0.75, 0.25}, {0.75, 0.25, 0.75}, {0.25, 0.25, 0.75}, {0.75, 0.75, 0.25}};
    if (i < 0 || i >= n || n > 8) throw Error(ErrorKind::BadSpec, "toy template holds at most 8 sites");
    return corners[i];
}

std::string composition_key(std::span<const std::string> sites) {
    std::map<std::string, int> counts;
    for (const auto& s : sites) counts[s]++;
    std::string out;
    for (const auto& [el, c] : counts) out += el + std::to_string(c);
    return out;
}

std::vector<DomainRecord> make_toy_dataset(const ToySpec& spec) {
    const int pool = spec.family == ToyFamily::Molecule ? int(toy_molecule_atoms().size()) : int(toy_elements().size());
    std::string bad;
    auto need = [&](bool ok, const std::string& what) {
        if (!ok) bad += (bad.empty() ? "" : "; ") + what;
    };
    need(spec.K >= 1 && spec.K <= pool, "K must be in [1, " + std::to_string(pool) + "]");
    need(spec.sigma >= 0.0 && std::isfinite(spec.sigma), "sigma must be >= 0");
    need(spec.min_sites >= 1 && spec.min_sites <= spec.max_sites, "need 1 <= min_sites <= max_sites");
    need(spec.family == ToyFamily::Molecule || spec.max_sites <= 8, "crystal families hold at most 8 sites");
    need(spec.count >= 0, "count must be >= 0");
    if (!bad.empty()) throw Error(ErrorKind::BadSpec, bad);

    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> size(spec.min_sites, spec.max_sites);
    std::uniform_int_distribution<int> pick(0, spec.K - 1);
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::vector<DomainRecord> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    for (std::int64_t k = 0; k < spec.count; ++k) {
        const int n = size(rng);
        DomainRecord rec;
        if (spec.family == ToyFamily::Molecule) {
            Molecule m;
            for (int i = 0; i < n; ++i) {
                m.smiles += toy_molecule_atoms()[pick(rng)];
                // Unit-spaced backbone bent out of plane so no two chains are mirror images.
                Vec3 base{double(i), 0.35 * std::sin(1.3 * i), 0.02 * i * i};
                for (double& x : base) x += spec.sigma * jitter(rng);
                m.coords.push_back(base);
            }
            rec.body = std::move(m);
        } else {
            Material m;
            for (int i = 0; i < n; ++i) m.sites.push_back(toy_elements()[pick(rng)]);
            std::sort(m.sites.begin(), m.sites.end());
            const double s = toy_crystal_scale(m.sites);
            m.lattice = {Vec3{s, 0, 0}, Vec3{0, s, 0}, Vec3{0, 0, s}};
            for (int i = 0; i < n; ++i) {
                Vec3 f = toy_template(i, n);
                for (double& x : f) x = wrap01(x + spec.sigma * jitter(rng));
                m.frac_coords.push_back(f);
            }
            rec.body = canonicalize(std::move(m));
            if (spec.family == ToyFamily::Conditional) rec.conditions = {{"<scale>", signed_log(s)}};
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace mixgen
