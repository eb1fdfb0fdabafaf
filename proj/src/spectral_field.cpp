#include "snsmix/spectral_field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include "snsmix/fft.hpp"

namespace snsmix {

SpectralField::SpectralField(const GridSpec& grid) : grid_(grid) {
    grid_.validate();
    data_.assign(static_cast<std::size_t>(grid_.n) * grid_.n, {0.0, 0.0});
}

void SpectralField::set_mode_pair(const WaveIndex& k, std::complex<double> z) {
    if (!retained(k)) throw CutoffError("mode " + k.str() + " outside cutoff");
    data_[flat(k)] = z;
    data_[flat(k.negated())] = std::conj(z);
}

void SpectralField::add_mode_pair(const WaveIndex& k, std::complex<double> z) {
    if (!retained(k)) throw CutoffError("mode " + k.str() + " outside cutoff");
    data_[flat(k)] += z;
    data_[flat(k.negated())] += std::conj(z);
}

void SpectralField::clear() { std::fill(data_.begin(), data_.end(), std::complex<double>{}); }

bool SpectralField::is_zero() const {
    for (const auto& z : data_)
        if (z != std::complex<double>{}) return false;
    return true;
}

SpectralField& SpectralField::operator+=(const SpectralField& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

SpectralField& SpectralField::operator*=(double s) {
    for (auto& z : data_) z *= s;
    return *this;
}

void SpectralField::axpy(double a, const SpectralField& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * o.data_[i];
}

double SpectralField::max_abs_coeff() const {
    double m = 0.0;
    for (const auto& z : data_) m = std::max(m, std::abs(z));
    return m;
}

bool SpectralField::all_finite() const {
    for (const auto& z : data_)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

double SpectralField::eval(double x, double y) const {
    const int K = cutoff();
    // sum over k1 in [-K,K] using Hermitian symmetry: value = c_0 + 2 Re sum_{k1>0 or (k1=0,k2>0)}
    double acc = 0.0;
    for (int k1 = 0; k1 <= K; ++k1) {
        for (int k2 = (k1 == 0 ? 1 : -K); k2 <= K; ++k2) {
            const std::complex<double> c = data_[flat({k1, k2})];
            if (c == std::complex<double>{}) continue;
            const double ph = k1 * x + k2 * y;
            acc += 2.0 * (c.real() * std::cos(ph) - c.imag() * std::sin(ph));
        }
    }
    return acc;
}

void SpectralField::enforce_truncation() {
    const int n = grid_.n;
    const int K = cutoff();
    for (int a = 0; a < n; ++a) {
        const int k1 = a <= n / 2 ? a : a - n;
        for (int b = 0; b < n; ++b) {
            const int k2 = b <= n / 2 ? b : b - n;
            if (std::abs(k1) > K || std::abs(k2) > K || (k1 == 0 && k2 == 0))
                data_[static_cast<std::size_t>(a) * n + b] = {0.0, 0.0};
        }
    }
    // Hermitian clean-up: average conjugate pairs (removes fp asymmetry from
    // round-tripped products).
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            const int na = (n - a) % n, nb = (n - b) % n;
            if (a * n + b < na * n + nb) {
                const auto z = 0.5 * (data_[static_cast<std::size_t>(a) * n + b] +
                                      std::conj(data_[static_cast<std::size_t>(na) * n + nb]));
                data_[static_cast<std::size_t>(a) * n + b] = z;
                data_[static_cast<std::size_t>(na) * n + nb] = std::conj(z);
            } else if (a == na && b == nb) {
                data_[static_cast<std::size_t>(a) * n + b] =
                    data_[static_cast<std::size_t>(a) * n + b].real();
            }
        }
    }
}

// --- basis -----------------------------------------------------------------

SpectralField make_basis_mode(const WaveIndex& k, const GridSpec& grid) {
    if (k.kx == 0 && k.ky == 0) throw CutoffError("basis mode k = 0");
    SpectralField f(grid);
    if (!f.retained(k)) throw CutoffError("mode " + k.str() + " outside cutoff");
    if (k.lex_positive())
        f.set_mode_pair(k, {0.0, -0.5});  // sin(k.x)
    else
        f.set_mode_pair(k, {0.5, 0.0});  // cos(k.x) = cos(|k|.x)
    return f;
}

double eval_basis_mode(const WaveIndex& k, double x, double y) {
    const double ph = k.kx * x + k.ky * y;
    return k.lex_positive() ? std::sin(ph) : std::cos(ph);
}

// --- calculus ----------------------------------------------------------------

VelocityField biot_savart(const SpectralField& omega) {
    VelocityField u{SpectralField(omega.grid()), SpectralField(omega.grid())};
    const int n = omega.n();
    const auto& w = omega.raw();
    auto& u1 = u.u1.raw();
    auto& u2 = u.u2.raw();
    for (int a = 0; a < n; ++a) {
        const int k1 = a <= n / 2 ? a : a - n;
        for (int b = 0; b < n; ++b) {
            const int k2 = b <= n / 2 ? b : b - n;
            const std::size_t i = static_cast<std::size_t>(a) * n + b;
            if (w[i] == std::complex<double>{} || (k1 == 0 && k2 == 0)) continue;
            const double inv = 1.0 / (double(k1) * k1 + double(k2) * k2);
            // u_hat = i (k2, -k1) w_hat / |k|^2
            const std::complex<double> iw{-w[i].imag(), w[i].real()};
            u1[i] = iw * (k2 * inv);
            u2[i] = iw * (-k1 * inv);
        }
    }
    return u;
}

SpectralField derivative(const SpectralField& f, int axis) {
    SpectralField g(f.grid());
    const int n = f.n();
    const auto& src = f.raw();
    auto& dst = g.raw();
    for (int a = 0; a < n; ++a) {
        const int k1 = a <= n / 2 ? a : a - n;
        for (int b = 0; b < n; ++b) {
            const int k2 = b <= n / 2 ? b : b - n;
            const std::size_t i = static_cast<std::size_t>(a) * n + b;
            const double kk = axis == 0 ? k1 : k2;
            dst[i] = std::complex<double>{-src[i].imag(), src[i].real()} * kk;
        }
    }
    return g;
}

SpectralField curl(const VelocityField& u) {
    SpectralField d1u2 = derivative(u.u2, 0);
    d1u2 -= derivative(u.u1, 1);
    return d1u2;
}

double sobolev_norm(const SpectralField& f, double s) {
    const int n = f.n();
    const auto& c = f.raw();
    double acc = 0.0;
    for (int a = 0; a < n; ++a) {
        const int k1 = a <= n / 2 ? a : a - n;
        for (int b = 0; b < n; ++b) {
            const int k2 = b <= n / 2 ? b : b - n;
            if (k1 == 0 && k2 == 0) continue;
            const std::size_t i = static_cast<std::size_t>(a) * n + b;
            const double m = std::norm(c[i]);
            if (m == 0.0) continue;
            const double k2n = double(k1) * k1 + double(k2) * k2;
            acc += std::pow(k2n, s) * m;
        }
    }
    return kTwoPi * std::sqrt(acc);
}

double sobolev_norm(const VelocityField& u, double s) {
    const double a = sobolev_norm(u.u1, s), b = sobolev_norm(u.u2, s);
    return std::sqrt(a * a + b * b);
}

double cumulative_l2sq(const SpectralField& f, double N) {
    const int n = f.n();
    const auto& c = f.raw();
    double acc = 0.0;
    const double N2 = N * N;
    for (int a = 0; a < n; ++a) {
        const int k1 = a <= n / 2 ? a : a - n;
        for (int b = 0; b < n; ++b) {
            const int k2 = b <= n / 2 ? b : b - n;
            if (k1 == 0 && k2 == 0) continue;
            if (double(k1) * k1 + double(k2) * k2 > N2) continue;
            acc += std::norm(c[static_cast<std::size_t>(a) * n + b]);
        }
    }
    return kTwoPi * kTwoPi * acc;
}

// --- transforms ----------------------------------------------------------------

namespace {

// Parity phase (-1)^{a+b} maps between the [-pi,pi) sample grid and FFTW's
// [0,2pi) indexing; applied symmetrically on both directions.
void apply_parity(int n, std::vector<std::complex<double>>& v) {
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if ((a + b) & 1) v[static_cast<std::size_t>(a) * n + b] *= -1.0;
}

}  // namespace

void to_physical(const SpectralField& f, std::vector<std::complex<double>>& phys) {
    const int n = f.n();
    phys = f.raw();
    apply_parity(n, phys);
    fft::inverse(n, phys.data());
}

SpectralField from_physical(const GridSpec& grid, std::vector<std::complex<double>>& phys) {
    const int n = grid.n;
    fft::forward(n, phys.data());
    const double scale = 1.0 / (static_cast<double>(n) * n);
    for (auto& z : phys) z *= scale;
    apply_parity(n, phys);
    SpectralField f(grid);
    f.raw() = phys;
    f.enforce_truncation();
    return f;
}

SpectralField advection_term(const VelocityField& u, const SpectralField& phi) {
    const GridSpec& grid = phi.grid();
    const int n = grid.n;
    std::vector<std::complex<double>> pu1, pu2, pd1, pd2;
    to_physical(u.u1, pu1);
    to_physical(u.u2, pu2);
    to_physical(derivative(phi, 0), pd1);
    to_physical(derivative(phi, 1), pd2);
    std::vector<std::complex<double>> prod(static_cast<std::size_t>(n) * n);
    for (std::size_t i = 0; i < prod.size(); ++i)
        prod[i] = pu1[i].real() * pd1[i].real() + pu2[i].real() * pd2[i].real();
    return from_physical(grid, prod);
}

SpectralField nonlinear_term(const SpectralField& omega) {
    return advection_term(biot_savart(omega), omega);
}

// --- forcing ---------------------------------------------------------------------

double ForcingSet::max_mode_norm() const {
    double m = 0.0;
    for (const auto& k : modes) m = std::max(m, k.norm());
    return m;
}

int ForcingSet::find(const WaveIndex& k) const {
    for (std::size_t i = 0; i < modes.size(); ++i)
        if (modes[i] == k) return static_cast<int>(i);
    return -1;
}

void ForcingSet::validate() const {
    if (modes.empty()) throw AssumptionError("forcing: F is empty");
    if (modes.size() != amps.size())
        throw AssumptionError("forcing: modes/amps size mismatch");
    for (std::size_t i = 0; i < modes.size(); ++i) {
        if (modes[i].kx == 0 && modes[i].ky == 0)
            throw AssumptionError("forcing: F contains 0");
        if (amps[i] == 0.0)
            throw AssumptionError("forcing: c_k = 0 at " + modes[i].str());
    }
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const int j = find(modes[i].negated());
        if (j < 0)
            throw AssumptionError("forcing: F != -F, missing " + modes[i].negated().str());
        if (amps[i] != amps[static_cast<std::size_t>(j)])
            throw AssumptionError("forcing: c_{-k} != c_k at " + modes[i].str());
    }
    bool two_norms = false;
    for (std::size_t i = 0; i < modes.size() && !two_norms; ++i)
        for (std::size_t j = i + 1; j < modes.size(); ++j)
            if (modes[i].norm2() != modes[j].norm2()) {
                two_norms = true;
                break;
            }
    if (!two_norms)
        throw AssumptionError("forcing: all modes have equal norm (need |k| != |j|)");
    // Z-span == Z^2 iff the gcd of all 2x2 minors is 1 (Smith normal form).
    long long g = 0;
    for (std::size_t i = 0; i < modes.size(); ++i)
        for (std::size_t j = i + 1; j < modes.size(); ++j)
            g = std::gcd(g, std::abs(modes[i].cross(modes[j])));
    if (g != 1)
        throw AssumptionError("forcing: Z-linear span of F is not Z^2 (minor gcd " +
                              std::to_string(g) + ")");
}

ForcingSet default_forcing() {
    ForcingSet F;
    F.modes = {{-1, -1}, {-1, 0}, {1, 0}, {1, 1}};
    F.amps = {1.0, 1.0, 1.0, 1.0};
    return F;
}

std::set<WaveIndex, WaveIndexLess> spanning_closure(const ForcingSet& F, int R,
                                                    int* iterations_out) {
    if (R < 1) throw ConfigError("spanning_closure: R >= 1 required");
    F.validate();
    const double r_work = R + 2.0 * std::ceil(F.max_mode_norm());
    std::set<WaveIndex, WaveIndexLess> acc(F.modes.begin(), F.modes.end());
    int sweeps = 0;  // number of A_j -> A_{j+1} applications that grew {|k| <= R}
    for (bool grew_inside = true; grew_inside;) {
        grew_inside = false;
        std::vector<WaveIndex> fresh;
        for (const auto& k : acc) {
            for (std::size_t j = 0; j < F.modes.size(); ++j) {
                const WaveIndex& fj = F.modes[j];
                if (k.norm2() == fj.norm2()) continue;
                if (k.cross(fj) == 0) continue;
                const WaveIndex s{k.kx + fj.kx, k.ky + fj.ky};
                if (s.kx == 0 && s.ky == 0) continue;
                if (s.norm() > r_work) continue;
                if (!acc.count(s)) fresh.push_back(s);
            }
        }
        for (const auto& s : fresh) {
            if (acc.insert(s).second && s.norm() <= R) grew_inside = true;
        }
        if (grew_inside) ++sweeps;
        if (fresh.empty()) break;
    }
    std::set<WaveIndex, WaveIndexLess> out;
    for (const auto& k : acc)
        if (k.norm() <= R) out.insert(k);
    if (iterations_out) *iterations_out = sweeps;
    return out;
}

SpectralField bracket_field(const WaveIndex& k, const WaveIndex& j, const GridSpec& grid) {
    if ((k.kx == 0 && k.ky == 0) || (j.kx == 0 && j.ky == 0))
        throw CutoffError("bracket_field: zero mode");
    // Work with complex exponentials: e_k = sum_s a_s e^{i s.x} (two terms).
    // grad^perp Lap^{-1} e^{i s.x} = i s^perp_vec e^{i s.x} / |s|^2 with
    // s^perp = (s2, -s1) from grad^perp = (-d2, d1) and Lap^{-1} = -1/|s|^2:
    //   grad^perp Lap^{-1} e^{isx} = (-d2, d1)(-e^{isx}/|s|^2)
    //                              = (i s2, -i s1) e^{isx} / |s|^2.
    auto exps = [](const WaveIndex& m) {
        std::vector<std::pair<WaveIndex, std::complex<double>>> v;
        if (m.lex_positive()) {
            v.push_back({m, {0.0, -0.5}});
            v.push_back({m.negated(), {0.0, 0.5}});
        } else {
            v.push_back({m, {0.5, 0.0}});
            v.push_back({m.negated(), {0.5, 0.0}});
        }
        return v;
    };
    std::map<std::pair<int, int>, std::complex<double>> out;
    auto accumulate = [&](const WaveIndex& a, const WaveIndex& b) {
        // grad^perp Lap^{-1} e_a . grad e_b
        for (const auto& [s, cs] : exps(a)) {
            const double inv = 1.0 / s.norm2();
            const std::complex<double> vel1{0.0, s.ky * inv};   // i s2 / |s|^2
            const std::complex<double> vel2{0.0, -s.kx * inv};  // -i s1 / |s|^2
            for (const auto& [t, ct] : exps(b)) {
                const std::complex<double> g1{0.0, double(t.kx)};
                const std::complex<double> g2{0.0, double(t.ky)};
                const std::complex<double> amp = cs * ct * (vel1 * g1 + vel2 * g2);
                if (amp == std::complex<double>{}) continue;
                out[{s.kx + t.kx, s.ky + t.ky}] += amp;
            }
        }
    };
    accumulate(j, k);
    accumulate(k, j);
    SpectralField f(grid);
    for (const auto& [kk, amp] : out) {
        if (kk.first == 0 && kk.second == 0) continue;
        if (std::abs(amp) < 1e-15) continue;
        const WaveIndex m{kk.first, kk.second};
        if (!f.retained(m)) continue;  // outside cutoff: dropped per dealias semantics
        f.raw()[f.flat(m)] += amp;
    }
    return f;
}

// --- serialization -----------------------------------------------------------------

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little,
                  "little-endian layout assumed");
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void write_field(std::ostream& os, const SpectralField& f) {
    os.write("SNSF", 4);
    put<std::uint32_t>(os, kFieldFormatVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(f.n()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(f.cutoff()));
    put<double>(os, f.grid().dealias_fraction);
    const int K = f.cutoff();
    for (int k1 = -K; k1 <= K; ++k1) {
        for (int k2 = -K; k2 <= K; ++k2) {
            const std::complex<double> c =
                (k1 == 0 && k2 == 0) ? std::complex<double>{} : f.coeff({k1, k2});
            put<double>(os, c.real());
            put<double>(os, c.imag());
        }
    }
}

SpectralField read_field(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SNSF")
        throw ConfigError("read_field: bad magic");
    const auto version = get<std::uint32_t>(is);
    if (version != kFieldFormatVersion)
        throw ConfigError("read_field: unsupported version " + std::to_string(version));
    GridSpec grid;
    grid.n = static_cast<int>(get<std::uint32_t>(is));
    const int K = static_cast<int>(get<std::uint32_t>(is));
    grid.dealias_fraction = get<double>(is);
    grid.validate();
    if (K != grid.cutoff()) throw ConfigError("read_field: cutoff/header mismatch");
    SpectralField f(grid);
    for (int k1 = -K; k1 <= K; ++k1) {
        for (int k2 = -K; k2 <= K; ++k2) {
            const double re = get<double>(is);
            const double im = get<double>(is);
            if (k1 == 0 && k2 == 0) continue;
            f.raw()[f.flat({k1, k2})] = {re, im};
        }
    }
    if (!is) throw ConfigError("read_field: truncated payload");
    return f;
}

void export_physical_csv(std::ostream& os, const SpectralField& f) {
    std::vector<std::complex<double>> phys;
    to_physical(f, phys);
    const int n = f.n();
    os << "x,y,value\n";
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            os << f.grid().coord(a) << ',' << f.grid().coord(b) << ','
               << phys[static_cast<std::size_t>(a) * n + b].real() << '\n';
}

}  // namespace snsmix
