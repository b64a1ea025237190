#include "pcw/pwe.hpp"

#include "pcw/constants.hpp"
#include "pcw/errors.hpp"
#include "pcw/parallel.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pcw {
namespace {

using Complex = std::complex<double>;
constexpr double kInvSqrt2 = 0.70710678118654752440;

// Permittivity (or inverse permittivity) coefficients on every index
// difference (dm, dp) that the basis can produce.
class CoefficientTable {
public:
    CoefficientTable(const Supercell& cell, const ReciprocalBasis& basis, bool of_inverse)
    {
        int m_lo = 0, m_hi = 0, p_lo = 0, p_hi = 0;
        for (const auto& [m, p] : basis.indices) {
            m_lo = std::min(m_lo, m);
            m_hi = std::max(m_hi, m);
            p_lo = std::min(p_lo, p);
            p_hi = std::max(p_hi, p);
        }
        dm_max_ = m_hi - m_lo;
        dp_max_ = p_hi - p_lo;
        width_ = 2 * dp_max_ + 1;
        values_.resize(static_cast<std::size_t>(2 * dm_max_ + 1) * static_cast<std::size_t>(width_));
        for (int dm = -dm_max_; dm <= dm_max_; ++dm) {
            for (int dp = -dp_max_; dp <= dp_max_; ++dp) {
                const Vec2 G = dm * basis.g1 + dp * basis.g2;
                values_[offset(dm, dp)] = fourier_coefficient(cell, G, of_inverse);
            }
        }
    }

    Complex operator()(int dm, int dp) const { return values_[offset(dm, dp)]; }

    double max_imag() const
    {
        double worst = 0;
        for (const auto& v : values_) {
            worst = std::max(worst, std::abs(v.imag()));
        }
        return worst;
    }

    double max_abs() const
    {
        double worst = 0;
        for (const auto& v : values_) {
            worst = std::max(worst, std::abs(v));
        }
        return worst;
    }

private:
    std::size_t offset(int dm, int dp) const
    {
        return static_cast<std::size_t>(dm + dm_max_) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(dp + dp_max_);
    }

    int dm_max_ = 0;
    int dp_max_ = 0;
    int width_ = 1;
    std::vector<Complex> values_;
};

void invert_hpd(Eigen::MatrixXd& a)
{
    const int n = static_cast<int>(a.rows());
    int info = LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'U', n, a.data(), n);
    if (info == 0) {
        info = LAPACKE_dpotri(LAPACK_COL_MAJOR, 'U', n, a.data(), n);
    }
    if (info != 0) {
        throw NumericalError("permittivity Toeplitz matrix is singular or not positive definite "
                             "(LAPACK info " + std::to_string(info) + ")");
    }
    a.triangularView<Eigen::StrictlyLower>() = a.transpose();
}

void invert_hpd(Eigen::MatrixXcd& a)
{
    const int n = static_cast<int>(a.rows());
    auto* data = reinterpret_cast<lapack_complex_double*>(a.data());
    int info = LAPACKE_zpotrf(LAPACK_COL_MAJOR, 'U', n, data, n);
    if (info == 0) {
        info = LAPACKE_zpotri(LAPACK_COL_MAJOR, 'U', n, data, n);
    }
    if (info != 0) {
        throw NumericalError("permittivity Toeplitz matrix is singular or not positive definite "
                             "(LAPACK info " + std::to_string(info) + ")");
    }
    a.triangularView<Eigen::StrictlyLower>() = a.adjoint();
}

// Lowest `count` eigenpairs of a symmetric matrix (destroyed).
void lowest_eigenpairs(Eigen::MatrixXd& a, int count, Eigen::VectorXd& values,
                       Eigen::MatrixXcd& vectors)
{
    const int n = static_cast<int>(a.rows());
    count = std::min(count, n);
    Eigen::VectorXd w(n);
    Eigen::MatrixXd z(n, std::max(count, 1));
    std::vector<lapack_int> support(2 * static_cast<std::size_t>(std::max(count, 1)));
    lapack_int found = 0;
    const int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'U', n, a.data(), n, 0.0, 0.0, 1,
                                    count, 0.0, &found, w.data(), z.data(), n, support.data());
    if (info != 0 || found != count) {
        throw NumericalError("dsyevr failed (info " + std::to_string(info) + ")");
    }
    values = w.head(count);
    vectors = z.leftCols(count).cast<Complex>();
}

void lowest_eigenpairs(Eigen::MatrixXcd& a, int count, Eigen::VectorXd& values,
                       Eigen::MatrixXcd& vectors)
{
    const int n = static_cast<int>(a.rows());
    count = std::min(count, n);
    Eigen::VectorXd w(n);
    Eigen::MatrixXcd z(n, std::max(count, 1));
    std::vector<lapack_int> support(2 * static_cast<std::size_t>(std::max(count, 1)));
    lapack_int found = 0;
    const int info = LAPACKE_zheevr(
        LAPACK_COL_MAJOR, 'V', 'I', 'U', n, reinterpret_cast<lapack_complex_double*>(a.data()), n,
        0.0, 0.0, 1, count, 0.0, &found, w.data(),
        reinterpret_cast<lapack_complex_double*>(z.data()), n, support.data());
    if (info != 0 || found != count) {
        throw NumericalError("zheevr failed (info " + std::to_string(info) + ")");
    }
    values = w.head(count);
    vectors = z.leftCols(count);
}

std::string describe(const Vec2& k)
{
    std::ostringstream out;
    out << "k*a = (" << k.x() << ", " << k.y() << ")";
    return out.str();
}

} // namespace

struct PlaneWaveProblem::Impl {
    Supercell cell;
    ReciprocalBasis basis;
    EpsilonRule rule = EpsilonRule::inverse;
    double a = 1;
    Eigen::VectorXd gx, gy; // dimensionless G * a
    bool real = true;
    bool mirror = false;

    // Mirror sectors: even = singles then pairs, odd = pairs.
    std::vector<int> singles;
    std::vector<std::array<int, 2>> pairs; // (rep with gy > 0, mirror partner)
    Eigen::MatrixXd eta_even, eta_odd;

    // Full eta when no mirror blocks are available.
    Eigen::MatrixXd eta_real;
    Eigen::MatrixXcd eta_complex;

    int even_size() const { return static_cast<int>(singles.size() + pairs.size()); }
    int odd_size() const { return static_cast<int>(pairs.size()); }
    int n() const { return static_cast<int>(basis.size()); }

    Complex coeff(const CoefficientTable& t, int i, int j) const
    {
        return t(basis.indices[i][0] - basis.indices[j][0], basis.indices[i][1] - basis.indices[j][1]);
    }

    void find_mirror_partners()
    {
        std::vector<int> partner(n(), -1);
        for (int i = 0; i < n(); ++i) {
            const Vec2 mirrored{basis.g_list[i].x(), -basis.g_list[i].y()};
            const double fm = mirrored.dot(cell.a1) / kTwoPi;
            const double fp = mirrored.dot(cell.a2) / kTwoPi;
            const long mi = std::lround(fm);
            const long pi = std::lround(fp);
            if (std::abs(fm - mi) > 1e-8 || std::abs(fp - pi) > 1e-8) {
                return;
            }
            const long j = basis.find(static_cast<int>(mi), static_cast<int>(pi));
            if (j < 0) {
                return;
            }
            partner[i] = static_cast<int>(j);
        }
        for (int i = 0; i < n(); ++i) {
            if (partner[i] == i) {
                singles.push_back(i);
            } else if (gy[i] > 0) {
                pairs.push_back({i, partner[i]});
            }
        }
        mirror = true;
    }

    void build_mirror_blocks(const CoefficientTable& t, bool invert)
    {
        const int ns = static_cast<int>(singles.size());
        const int np = odd_size();
        eta_even.resize(even_size(), even_size());
        eta_odd.resize(np, np);
        const double sqrt2 = std::sqrt(2.0);
        for (int a = 0; a < ns; ++a) {
            for (int b = 0; b < ns; ++b) {
                eta_even(a, b) = coeff(t, singles[a], singles[b]).real();
            }
            for (int b = 0; b < np; ++b) {
                const double v = sqrt2 * coeff(t, singles[a], pairs[b][0]).real();
                eta_even(a, ns + b) = v;
                eta_even(ns + b, a) = v;
            }
        }
        for (int a = 0; a < np; ++a) {
            for (int b = 0; b < np; ++b) {
                const double direct = coeff(t, pairs[a][0], pairs[b][0]).real();
                const double crossed = coeff(t, pairs[a][0], pairs[b][1]).real();
                eta_even(ns + a, ns + b) = direct + crossed;
                eta_odd(a, b) = direct - crossed;
            }
        }
        if (invert) {
            invert_hpd(eta_even);
            invert_hpd(eta_odd);
        }
    }

    void build_full(const CoefficientTable& t, bool invert)
    {
        if (real) {
            eta_real.resize(n(), n());
            for (int i = 0; i < n(); ++i) {
                for (int j = 0; j < n(); ++j) {
                    eta_real(i, j) = coeff(t, i, j).real();
                }
            }
            if (invert) {
                invert_hpd(eta_real);
            }
        } else {
            eta_complex.resize(n(), n());
            for (int i = 0; i < n(); ++i) {
                for (int j = 0; j < n(); ++j) {
                    eta_complex(i, j) = coeff(t, i, j);
                }
            }
            if (invert) {
                invert_hpd(eta_complex);
            }
        }
    }

    Eigen::MatrixXcd full_eta() const
    {
        if (!mirror) {
            return real ? Eigen::MatrixXcd(eta_real.cast<Complex>()) : eta_complex;
        }
        // eta = P_e eta_e P_e^T + P_o eta_o P_o^T, written out member by member.
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n(), n());
        const int ns = static_cast<int>(singles.size());
        struct Term {
            int index;
            double weight;
        };
        auto even_terms = [&](int a) -> std::vector<Term> {
            if (a < ns) {
                return {{singles[a], 1.0}};
            }
            const auto& pr = pairs[a - ns];
            return {{pr[0], kInvSqrt2}, {pr[1], kInvSqrt2}};
        };
        for (int a = 0; a < even_size(); ++a) {
            for (int b = 0; b < even_size(); ++b) {
                for (const auto& ta : even_terms(a)) {
                    for (const auto& tb : even_terms(b)) {
                        out(ta.index, tb.index) += ta.weight * tb.weight * eta_even(a, b);
                    }
                }
            }
        }
        for (int a = 0; a < odd_size(); ++a) {
            for (int b = 0; b < odd_size(); ++b) {
                const double v = 0.5 * eta_odd(a, b);
                out(pairs[a][0], pairs[b][0]) += v;
                out(pairs[a][0], pairs[b][1]) -= v;
                out(pairs[a][1], pairs[b][0]) -= v;
                out(pairs[a][1], pairs[b][1]) += v;
            }
        }
        return out;
    }

    Eigen::VectorXcd apply_eta(const Eigen::VectorXcd& v) const
    {
        if (!mirror) {
            return real ? Eigen::VectorXcd(eta_real.cast<Complex>() * v) : Eigen::VectorXcd(eta_complex * v);
        }
        const int ns = static_cast<int>(singles.size());
        Eigen::VectorXcd ce(even_size()), co(odd_size());
        for (int a = 0; a < ns; ++a) {
            ce[a] = v[singles[a]];
        }
        for (int b = 0; b < odd_size(); ++b) {
            ce[ns + b] = kInvSqrt2 * (v[pairs[b][0]] + v[pairs[b][1]]);
            co[b] = kInvSqrt2 * (v[pairs[b][0]] - v[pairs[b][1]]);
        }
        const Eigen::VectorXcd re = eta_even.cast<Complex>() * ce;
        const Eigen::VectorXcd ro = eta_odd.cast<Complex>() * co;
        Eigen::VectorXcd out(n());
        for (int a = 0; a < ns; ++a) {
            out[singles[a]] = re[a];
        }
        for (int b = 0; b < odd_size(); ++b) {
            out[pairs[b][0]] = kInvSqrt2 * (re[ns + b] + ro[b]);
            out[pairs[b][1]] = kInvSqrt2 * (re[ns + b] - ro[b]);
        }
        return out;
    }

    Eigenpairs solve_sector(const Vec2& k, int n_bands, bool odd) const
    {
        const int ns = static_cast<int>(singles.size());
        const int np = odd_size();
        Eigen::MatrixXd theta;
        if (odd) {
            theta.resize(np, np);
            for (int b = 0; b < np; ++b) {
                const int jb = pairs[b][0];
                const double qxb = k.x() + gx[jb];
                for (int a = 0; a < np; ++a) {
                    const int ia = pairs[a][0];
                    theta(a, b) = (k.x() + gx[ia]) * qxb * eta_odd(a, b) +
                                  gy[ia] * gy[jb] * eta_even(ns + a, ns + b);
                }
            }
        } else {
            const int ne = even_size();
            auto member = [&](int a) { return a < ns ? singles[a] : pairs[a - ns][0]; };
            theta.resize(ne, ne);
            for (int b = 0; b < ne; ++b) {
                const int jb = member(b);
                const double qxb = k.x() + gx[jb];
                for (int a = 0; a < ne; ++a) {
                    const int ia = member(a);
                    double v = (k.x() + gx[ia]) * qxb * eta_even(a, b);
                    if (a >= ns && b >= ns) {
                        v += gy[ia] * gy[jb] * eta_odd(a - ns, b - ns);
                    }
                    theta(a, b) = v;
                }
            }
        }
        Eigen::VectorXd values;
        Eigen::MatrixXcd sector_vectors;
        lowest_eigenpairs(theta, n_bands, values, sector_vectors);

        Eigenpairs out;
        out.values = values;
        out.vectors = Eigen::MatrixXcd::Zero(n(), values.size());
        out.parity.assign(values.size(), odd ? -1 : +1);
        for (Eigen::Index c = 0; c < values.size(); ++c) {
            if (odd) {
                for (int a = 0; a < np; ++a) {
                    out.vectors(pairs[a][0], c) = kInvSqrt2 * sector_vectors(a, c);
                    out.vectors(pairs[a][1], c) = -kInvSqrt2 * sector_vectors(a, c);
                }
            } else {
                for (int a = 0; a < ns; ++a) {
                    out.vectors(singles[a], c) = sector_vectors(a, c);
                }
                for (int b = 0; b < np; ++b) {
                    out.vectors(pairs[b][0], c) = kInvSqrt2 * sector_vectors(ns + b, c);
                    out.vectors(pairs[b][1], c) = kInvSqrt2 * sector_vectors(ns + b, c);
                }
            }
        }
        return out;
    }

    Eigenpairs solve_full(const Vec2& k, int n_bands) const
    {
        Eigenpairs out;
        Eigen::VectorXd values;
        Eigen::MatrixXcd vectors;
        if (real && !mirror) {
            Eigen::MatrixXd theta(n(), n());
            for (int j = 0; j < n(); ++j) {
                for (int i = 0; i < n(); ++i) {
                    theta(i, j) = ((k.x() + gx[i]) * (k.x() + gx[j]) + (k.y() + gy[i]) * (k.y() + gy[j])) *
                                  eta_real(i, j);
                }
            }
            lowest_eigenpairs(theta, n_bands, values, vectors);
        } else {
            Eigen::MatrixXcd theta = operator_matrix(k);
            lowest_eigenpairs(theta, n_bands, values, vectors);
        }
        out.values = values;
        out.vectors = vectors;
        out.parity.assign(values.size(), 0);
        return out;
    }

    Eigen::MatrixXcd operator_matrix(const Vec2& k) const
    {
        const Eigen::MatrixXcd eta = full_eta();
        Eigen::MatrixXcd theta(n(), n());
        for (int j = 0; j < n(); ++j) {
            for (int i = 0; i < n(); ++i) {
                theta(i, j) = ((k.x() + gx[i]) * (k.x() + gx[j]) + (k.y() + gy[i]) * (k.y() + gy[j])) *
                              eta(i, j);
            }
        }
        return theta;
    }
};

PlaneWaveProblem::PlaneWaveProblem(Supercell cell, ReciprocalBasis basis, EpsilonRule rule)
    : impl_(std::make_unique<Impl>())
{
    if (basis.size() == 0) {
        throw ParameterError("empty plane-wave basis");
    }
    auto& d = *impl_;
    d.cell = std::move(cell);
    d.basis = std::move(basis);
    d.rule = rule;
    d.a = d.cell.lattice_constant;
    d.gx.resize(d.n());
    d.gy.resize(d.n());
    for (int i = 0; i < d.n(); ++i) {
        d.gx[i] = d.basis.g_list[i].x() * d.a;
        d.gy[i] = d.basis.g_list[i].y() * d.a;
    }
    const bool invert = rule == EpsilonRule::inverse;
    const CoefficientTable table(d.cell, d.basis, /*of_inverse=*/!invert);
    d.real = table.max_imag() <= 1e-13 * table.max_abs();
    if (d.real && d.cell.is_mirror_symmetric()) {
        d.find_mirror_partners();
    }
    if (d.mirror) {
        d.build_mirror_blocks(table, invert);
    } else {
        d.build_full(table, invert);
    }
}

PlaneWaveProblem::~PlaneWaveProblem() = default;

const Supercell& PlaneWaveProblem::cell() const { return impl_->cell; }
const ReciprocalBasis& PlaneWaveProblem::basis() const { return impl_->basis; }
EpsilonRule PlaneWaveProblem::rule() const { return impl_->rule; }
bool PlaneWaveProblem::is_real() const { return impl_->real; }
bool PlaneWaveProblem::has_mirror_blocks() const { return impl_->mirror; }

Eigen::MatrixXcd PlaneWaveProblem::operator_matrix(const Vec2& k) const
{
    return impl_->operator_matrix(k);
}

Eigenpairs PlaneWaveProblem::solve(const Vec2& k, int n_bands, MirrorSector sector) const
{
    if (n_bands < 1) {
        throw ParameterError("n_bands must be >= 1");
    }
    if (static_cast<std::size_t>(n_bands) > impl_->basis.size()) {
        throw ParameterError("n_bands exceeds the basis size");
    }
    const auto& d = *impl_;
    const bool on_mirror_line = std::abs(k.y()) <= 1e-14 * std::max(1.0, k.norm());
    try {
        if (sector != MirrorSector::both) {
            if (!d.mirror || !on_mirror_line) {
                throw ParameterError("mirror sectors need a mirror-symmetric cell and ky = 0");
            }
            return d.solve_sector(k, n_bands, sector == MirrorSector::odd);
        }
        if (!d.mirror || !on_mirror_line) {
            return d.solve_full(k, n_bands);
        }
        const Eigenpairs even = d.solve_sector(k, std::min(n_bands, d.even_size()), false);
        const Eigenpairs odd = d.odd_size() > 0
                                   ? d.solve_sector(k, std::min(n_bands, d.odd_size()), true)
                                   : Eigenpairs{};
        // Merge both sectors by frequency.
        std::vector<std::pair<int, Eigen::Index>> order; // (sector, column)
        for (Eigen::Index c = 0; c < even.values.size(); ++c) {
            order.emplace_back(0, c);
        }
        for (Eigen::Index c = 0; c < odd.values.size(); ++c) {
            order.emplace_back(1, c);
        }
        auto value = [&](const std::pair<int, Eigen::Index>& e) {
            return e.first == 0 ? even.values[e.second] : odd.values[e.second];
        };
        std::stable_sort(order.begin(), order.end(),
                         [&](const auto& l, const auto& r) { return value(l) < value(r); });
        Eigenpairs out;
        out.values.resize(n_bands);
        out.vectors.resize(d.n(), n_bands);
        for (int b = 0; b < n_bands; ++b) {
            const auto& e = order[b];
            const Eigenpairs& src = e.first == 0 ? even : odd;
            out.values[b] = src.values[e.second];
            out.vectors.col(b) = src.vectors.col(e.second);
            out.parity.push_back(src.parity[e.second]);
        }
        return out;
    } catch (const NumericalError& err) {
        throw NumericalError(std::string("eigensolve failed at ") + describe(k) + ": " + err.what());
    }
}

Eigen::VectorXcd PlaneWaveProblem::apply_eta(const Eigen::VectorXcd& v) const
{
    return impl_->apply_eta(v);
}

double PlaneWaveProblem::operator_derivative(const Vec2& k, const Eigen::VectorXcd& h,
                                             const Vec2& direction) const
{
    const auto& d = *impl_;
    double total = 0;
    for (int c = 0; c < 2; ++c) {
        if (direction[c] == 0.0) {
            continue;
        }
        const Eigen::VectorXd q = (c == 0 ? d.gx : d.gy).array() + k[c];
        const Eigen::VectorXcd w = q.cast<Complex>().cwiseProduct(h);
        total += direction[c] * 2.0 * h.dot(d.apply_eta(w)).real();
    }
    return total;
}

double BandStructure::omega(std::size_t k_index, int band) const
{
    return kTwoPi * kSpeedOfLight * bands(static_cast<Eigen::Index>(k_index), band) / lattice_constant();
}

Eigen::MatrixXcd assemble_operator(const Supercell& cell, const Vec2& k, const ReciprocalBasis& basis,
                                   EpsilonRule rule)
{
    const PlaneWaveProblem problem(cell, basis, rule);
    const double a = cell.lattice_constant;
    return problem.operator_matrix(k * a) / (a * a);
}

BandStructure solve_bands(const Supercell& cell, const std::vector<Vec2>& k_path,
                          const ReciprocalBasis& basis, const SolverOptions& options)
{
    return solve_bands(std::make_shared<const PlaneWaveProblem>(cell, basis, options.rule), k_path,
                       options);
}

BandStructure solve_bands(std::shared_ptr<const PlaneWaveProblem> problem,
                          const std::vector<Vec2>& k_path, const SolverOptions& options)
{
    if (options.n_bands < 1 || static_cast<std::size_t>(options.n_bands) > problem->basis().size()) {
        throw ParameterError("n_bands must lie in [1, basis size]");
    }
    BandStructure bs;
    bs.k_points = k_path;
    bs.options = options;
    bs.problem = problem;
    const std::size_t nk = k_path.size();
    bs.bands.resize(static_cast<Eigen::Index>(nk), options.n_bands);
    bs.eigenvectors.resize(nk);
    bs.parity.resize(nk);
    const double a = problem->cell().lattice_constant;
    parallel_for(nk, options.threads, [&](std::size_t i) {
        const Eigenpairs pairs = problem->solve(k_path[i] * a, options.n_bands, options.sector);
        for (int b = 0; b < options.n_bands; ++b) {
            const double lambda = std::max(pairs.values[b], 0.0);
            bs.bands(static_cast<Eigen::Index>(i), b) = std::sqrt(lambda) / kTwoPi;
            bs.eigenvectors[i].push_back(pairs.vectors.col(b));
        }
        bs.parity[i] = pairs.parity;
    });
    return bs;
}

std::vector<double> empty_lattice_reference(const Vec2& k, const std::vector<Vec2>& g_set, double eps,
                                            double a)
{
    std::vector<double> out;
    out.reserve(g_set.size());
    for (const auto& G : g_set) {
        out.push_back((k + G).norm() * a / (kTwoPi * std::sqrt(eps)));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Vec2> high_symmetry_path(const Supercell& bulk_cell, int per_segment)
{
    if (per_segment < 1) {
        throw ParameterError("need at least one point per k-path segment");
    }
    const auto g = reciprocal_vectors(bulk_cell);
    const Vec2 gamma = Vec2::Zero();
    const Vec2 m_point = 0.5 * g[1];
    const Vec2 k_point = (g[0] + 2.0 * g[1]) / 3.0;
    const std::array<Vec2, 4> corners{gamma, m_point, k_point, gamma};
    std::vector<Vec2> path;
    for (int leg = 0; leg < 3; ++leg) {
        for (int i = 0; i < per_segment; ++i) {
            const double f = static_cast<double>(i) / per_segment;
            path.push_back((1.0 - f) * corners[leg] + f * corners[leg + 1]);
        }
    }
    path.push_back(gamma);
    return path;
}

Vec2 ModeField::position(int is, int it) const
{
    return (static_cast<double>(is) / ns) * a1 + (static_cast<double>(it) / nt) * a2;
}

ModeField reconstruct_field(const BandStructure& bs, std::size_t k_index, int band_index,
                            int grid_resolution)
{
    if (k_index >= bs.k_count() || band_index < 0 || band_index >= bs.band_count()) {
        throw ParameterError("mode index out of range");
    }
    const double omega_a_over_c = kTwoPi * bs.bands(static_cast<Eigen::Index>(k_index), band_index);
    return reconstruct_field(bs.cell(), bs.problem->basis(), bs.k_points[k_index], omega_a_over_c,
                             bs.eigenvectors[k_index][band_index], grid_resolution);
}

ModeField reconstruct_field(const Supercell& cell, const ReciprocalBasis& basis, const Vec2& k,
                            double omega_a_over_c, const Eigen::VectorXcd& coefficients,
                            int grid_resolution)
{
    if (grid_resolution < 2) {
        throw ParameterError("grid resolution must be >= 2");
    }
    if (!(omega_a_over_c > 1e-9)) {
        throw DegenerateModeError("zero-frequency mode: E field undefined");
    }
    if (static_cast<std::size_t>(coefficients.size()) != basis.size()) {
        throw ParameterError("coefficient vector does not match basis");
    }
    ModeField field;
    field.ns = grid_resolution;
    field.nt = grid_resolution * cell.rows;
    field.a1 = cell.a1;
    field.a2 = cell.a2;
    field.cell_area = cell.area();
    const std::size_t npts = field.size();

    int m_lo = 0, m_hi = 0, p_lo = 0, p_hi = 0;
    for (const auto& mp : basis.indices) {
        m_lo = std::min(m_lo, mp[0]);
        m_hi = std::max(m_hi, mp[0]);
        p_lo = std::min(p_lo, mp[1]);
        p_hi = std::max(p_hi, mp[1]);
    }
    const int nm = m_hi - m_lo + 1;
    Eigen::MatrixXcd p_phase(p_hi - p_lo + 1, field.nt);
    for (int p = p_lo; p <= p_hi; ++p) {
        for (int it = 0; it < field.nt; ++it) {
            p_phase(p - p_lo, it) = std::polar(1.0, kTwoPi * p * static_cast<double>(it) / field.nt);
        }
    }

    // Coefficient sets: H, Dx ~ i qy h, Dy ~ -i qx h.
    const Complex I{0.0, 1.0};
    std::array<Eigen::VectorXcd, 3> sets;
    for (auto& s : sets) {
        s.resize(coefficients.size());
    }
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const Vec2 q = k + basis.g_list[i];
        sets[0][i] = coefficients[i];
        sets[1][i] = I * q.y() * coefficients[i];
        sets[2][i] = -I * q.x() * coefficients[i];
    }

    // Stage 1: partial sums over p for each (m, t).
    std::vector<Eigen::MatrixXcd> partial(3, Eigen::MatrixXcd::Zero(nm, field.nt));
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const auto [m, p] = basis.indices[i];
        for (int s = 0; s < 3; ++s) {
            partial[s].row(m - m_lo) += sets[s][i] * p_phase.row(p - p_lo);
        }
    }
    // Stage 2: sum over m for each (s, t), times the Bloch factor.
    std::array<Eigen::VectorXcd, 3> values;
    for (auto& v : values) {
        v.resize(static_cast<Eigen::Index>(npts));
    }
    Eigen::MatrixXcd m_phase(nm, field.ns);
    for (int m = 0; m < nm; ++m) {
        for (int is = 0; is < field.ns; ++is) {
            m_phase(m, is) = std::polar(1.0, kTwoPi * (m + m_lo) * static_cast<double>(is) / field.ns);
        }
    }
    for (int it = 0; it < field.nt; ++it) {
        for (int is = 0; is < field.ns; ++is) {
            const Complex bloch = std::polar(1.0, k.dot(field.position(is, it)));
            const std::size_t idx = static_cast<std::size_t>(is) + static_cast<std::size_t>(field.ns) * it;
            for (int s = 0; s < 3; ++s) {
                values[s][static_cast<Eigen::Index>(idx)] =
                    bloch * partial[s].col(it).cwiseProduct(m_phase.col(is)).sum();
            }
        }
    }

    field.eps.resize(static_cast<Eigen::Index>(npts));
    for (int it = 0; it < field.nt; ++it) {
        for (int is = 0; is < field.ns; ++is) {
            field.eps[is + field.ns * it] = cell.permittivity_at(field.position(is, it));
        }
    }

    field.ex_field = values[1].cwiseQuotient(field.eps.cast<Complex>());
    field.ey_field = values[2].cwiseQuotient(field.eps.cast<Complex>());
    field.energy_density =
        (values[1].cwiseAbs2() + values[2].cwiseAbs2()).cwiseQuotient(field.eps);
    const double total = field.energy_density.sum() * field.element_area();
    if (!(total > 0)) {
        throw DegenerateModeError("mode has no electric energy");
    }
    const double scale = 1.0 / std::sqrt(total);
    field.h_field = values[0] * scale;
    field.ex_field *= scale;
    field.ey_field *= scale;
    field.energy_density /= total;
    return field;
}

} // namespace pcw
