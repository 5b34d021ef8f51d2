// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include "risloc/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace risloc {

namespace {

constexpr double kPi = 3.141592653589793238462643383279;
constexpr double kInf = std::numeric_limits<double>::infinity();

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

std::complex<double> gain_for(const Eigen::VectorXcd &h, const Eigen::VectorXcd &y) {
    const double nh2 = h.squaredNorm();
    if (nh2 == 0.0)
        throw DegenerateModel("zero channel vector");
    return h.dot(y) / nh2;
}

// ||Pi_perp_h y||^2 in the projection form used for grid scoring.
double projection_objective(double yy, const Eigen::VectorXcd &h, const Eigen::VectorXcd &y) {
    const double nh2 = h.squaredNorm();
    if (nh2 == 0.0)
        throw DegenerateModel("zero channel vector");
    return yy - std::norm(h.dot(y)) / nh2;
}

struct ArgMin {
    int index = -1;
    double value = kInf;
};

// Strict less-than keeps the lowest linear index on ties.
ArgMin score_table(const GridTables::Table &table, const Eigen::VectorXcd &y, double yy) {
    const Eigen::VectorXcd q = table.h.adjoint() * y;
    ArgMin best;
    for (int k = 0; k < q.size(); ++k) {
        const double val = yy - std::norm(q[k]) / table.norms2[k];
        if (!std::isfinite(val))
            throw NumericalFailure("non-finite grid objective");
        if (val < best.value) {
            best.value = val;
            best.index = k;
        }
    }
    return best;
}

Eigen::Vector3d to_eigen(const Vec3 &v) { return {v.x, v.y, v.z}; }
Vec3 from_eigen(const Eigen::Vector3d &v) { return {v[0], v[1], v[2]}; }

// Shared closed-form residual step for both refinement families:
// argmin over real x of ||y - alpha (base + j mat^T x)||^2.
Eigen::Vector3d solve_residual(const Eigen::VectorXcd &base, const Eigen::Matrix3Xcd &mat, std::complex<double> alpha,
                               const Eigen::VectorXcd &y) {
    if (alpha == std::complex<double>(0.0, 0.0))
        throw DegenerateModel("zero gain in closed-form residual update");
    const double a2 = std::norm(alpha);
    const Eigen::Matrix3d normal = (mat.conjugate() * mat.transpose()).real();
    const Eigen::Vector3d rhs = (mat * (a2 * base.conjugate() - alpha * y.conjugate())).imag();
    Eigen::LLT<Eigen::Matrix3d> llt(normal);
    if (llt.info() != Eigen::Success)
        throw RankDeficient("normal matrix Re{X* X^T} is not positive definite (need L >= 3 with random profiles)");
    const Eigen::Vector3d x = llt.solve(rhs) / a2;
    if (!x.allFinite())
        throw NumericalFailure("non-finite closed-form residual");
    return x;
}

std::complex<double> gain_step(const Eigen::VectorXcd &base, const Eigen::Matrix3Xcd &mat, const Eigen::Vector3d &x,
                               const Eigen::VectorXcd &y) {
    const Eigen::VectorXcd g =
        base + std::complex<double>(0.0, 1.0) * (mat.transpose() * x.cast<std::complex<double>>());
    return gain_for(g, y);
}

double residual_objective(const Eigen::VectorXcd &base, const Eigen::Matrix3Xcd &mat, std::complex<double> alpha,
                          const Eigen::Vector3d &x, const Eigen::VectorXcd &y) {
    const Eigen::VectorXcd g =
        base + std::complex<double>(0.0, 1.0) * (mat.transpose() * x.cast<std::complex<double>>());
    return (y - alpha * g).squaredNorm();
}

} // namespace

void GridSpec::validate() const {
    if (n_theta < 2 || n_phi < 2 || n_rho < 2)
        throw ValidationError("GridSpec: all grid counts must be >= 2");
    if (!(rho_max > 0.0))
        throw ValidationError("GridSpec: rho_max must be positive");
}

double GridSpec::theta_at(int i) const { return 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n_theta); }
double GridSpec::phi_ff_at(int i) const {
    return 0.5 * kPi * static_cast<double>(i) / static_cast<double>(n_phi - 1);
}
double GridSpec::phi_nf_at(int i) const { return kPi * static_cast<double>(i) / static_cast<double>(n_phi - 1); }
double GridSpec::rho_at(int i) const { return rho_max * static_cast<double>(i + 1) / static_cast<double>(n_rho); }

GridTables::GridTables(const ChannelModel &model, const GridSpec &grid, std::size_t capacity)
    : model_(model), grid_(grid), capacity_(std::max<std::size_t>(capacity, 2)) {
    grid_.validate();
}

std::shared_ptr<const GridTables::Table> GridTables::build_far_field() const {
    const auto &W = model_.weights();
    const int m_count = model_.num_elements();
    const int k_total = grid_.n_theta * grid_.n_phi;
    const double k = model_.wavenumber();
    const Vec3 ref = model_.scenario().ris.reference;

    auto table = std::make_shared<Table>();
    table->h.resize(model_.num_pilots(), k_total);
    table->norms2.resize(k_total);

    constexpr int chunk = 512;
    Eigen::MatrixXcd a(m_count, chunk);
    for (int c0 = 0; c0 < k_total; c0 += chunk) {
        const int cols = std::min(chunk, k_total - c0);
        for (int c = 0; c < cols; ++c) {
            const int idx = c0 + c;
            const double theta = grid_.theta_at(idx / grid_.n_phi);
            const double phi = grid_.phi_ff_at(idx % grid_.n_phi);
            const Eigen::Vector3d dir(std::sin(phi) * std::cos(theta), std::sin(phi) * std::sin(theta),
                                      std::cos(phi));
            for (int m = 0; m < m_count; ++m) {
                const Eigen::Vector3d offset = model_.element_positions().col(m) - to_eigen(ref);
                a(m, c) = std::polar(1.0, k * offset.dot(dir));
            }
        }
        table->h.middleCols(c0, cols).noalias() = W * a.leftCols(cols);
    }
    table->norms2 = table->h.colwise().squaredNorm().transpose();
    return table;
}

std::shared_ptr<const GridTables::Table> GridTables::build_near_field(int rho_index) const {
    const auto &W = model_.weights();
    const int m_count = model_.num_elements();
    const int k_total = grid_.n_theta * grid_.n_phi;
    const double k = model_.wavenumber();
    const double rho = grid_.rho_at(rho_index);
    const Eigen::Vector3d ref = to_eigen(model_.scenario().ris.reference);

    auto table = std::make_shared<Table>();
    table->h.resize(model_.num_pilots(), k_total);
    table->norms2.resize(k_total);

    constexpr int chunk = 512;
    Eigen::MatrixXcd a(m_count, chunk);
    for (int c0 = 0; c0 < k_total; c0 += chunk) {
        const int cols = std::min(chunk, k_total - c0);
        for (int c = 0; c < cols; ++c) {
            const int idx = c0 + c;
            const double theta = grid_.theta_at(idx / grid_.n_phi);
            const double phi = grid_.phi_nf_at(idx % grid_.n_phi);
            const Eigen::Vector3d p =
                ref + rho * Eigen::Vector3d(std::sin(phi) * std::cos(theta), std::sin(phi) * std::sin(theta),
                                            std::cos(phi));
            for (int m = 0; m < m_count; ++m) {
                const double dm = (model_.element_positions().col(m) - p).norm();
                a(m, c) = std::polar(1.0, -k * (dm - rho));
            }
        }
        table->h.middleCols(c0, cols).noalias() = W * a.leftCols(cols);
    }
    table->norms2 = table->h.colwise().squaredNorm().transpose();
    return table;
}

std::shared_ptr<const GridTables::Table> GridTables::far_field() {
    std::shared_future<std::shared_ptr<const Table>> fut;
    bool builder = false;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (!ff_started_) {
            ff_started_ = true;
            builder = true;
            std::promise<std::shared_ptr<const Table>> prom;
            ff_ = prom.get_future().share();
            fut = ff_;
            ff_promise_ = std::move(prom);
        } else {
            fut = ff_;
        }
    }
    if (builder) {
        try {
            ff_promise_.set_value(build_far_field());
        } catch (...) {
            ff_promise_.set_exception(std::current_exception());
        }
    }
    return fut.get();
}

std::shared_ptr<const GridTables::Table> GridTables::near_field(int rho_index) {
    std::shared_future<std::shared_ptr<const Table>> fut;
    std::promise<std::shared_ptr<const Table>> prom;
    bool builder = false;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = nf_.find(rho_index);
        if (it != nf_.end()) {
            fut = it->second;
            nf_order_.remove(rho_index);
            nf_order_.push_front(rho_index);
        } else {
            builder = true;
            fut = prom.get_future().share();
            nf_.emplace(rho_index, fut);
            nf_order_.push_front(rho_index);
            while (nf_order_.size() > capacity_) {
                nf_.erase(nf_order_.back());
                nf_order_.pop_back();
            }
        }
    }
    if (builder) {
        try {
            prom.set_value(build_near_field(rho_index));
        } catch (...) {
            prom.set_exception(std::current_exception());
        }
    }
    return fut.get();
}

std::complex<double> alpha_hat(const ChannelModel &model, const Vec3 &p, const Vec3 &v, const Eigen::VectorXcd &y) {
    return gain_for(model.h_vector(p, v), y);
}

double concentrated_objective(const ChannelModel &model, const Vec3 &p, const Vec3 &v, const Eigen::VectorXcd &y) {
    const Eigen::VectorXcd h = model.h_vector(p, v);
    const std::complex<double> alpha = gain_for(h, y);
    return (y - alpha * h).squaredNorm();
}

// Two-step residual form; cancellation-free near perfect fits.
double residual_objective_of(const Eigen::VectorXcd &h, const Eigen::VectorXcd &y) {
    const std::complex<double> alpha = gain_for(h, y);
    return (y - alpha * h).squaredNorm();
}

double static_objective(const ChannelModel &model, double theta, double phi, std::optional<double> rho,
                        const Eigen::VectorXcd &y, SteeringKind kind) {
    if (kind == SteeringKind::FarField) {
        const Eigen::VectorXcd a =
            steering_ff(theta, phi, model.scenario().ris, model.scenario().rf.wavelength);
        return residual_objective_of(model.weights() * a, y);
    }
    if (!rho)
        throw ValidationError("static_objective: near-field evaluation needs a range");
    const Vec3 p = model.scenario().ris.reference + spherical_to_cartesian(Spherical(*rho, theta, phi));
    return residual_objective_of(model.h_static(p), y);
}

InitResult init_pos_gain(const Eigen::VectorXcd &y, const ChannelModel &model, const GridSpec &grid,
                         const ConvergenceConfig &conv, GridTables *tables) {
    grid.validate();
    if (conv.max_grid_iterations < 1)
        throw ValidationError("init_pos_gain: max_grid_iterations must be >= 1");
    std::optional<GridTables> local;
    if (tables == nullptr) {
        local.emplace(model, grid);
        tables = &*local;
    }

    const double yy = y.squaredNorm();
    const Vec3 ref = model.scenario().ris.reference;

    // Far-field 2D stage.
    const ArgMin ff = score_table(*tables->far_field(), y, yy);
    int i_theta = ff.index / grid.n_phi;
    int i_phi_ff = ff.index % grid.n_phi;
    double theta_hat = grid.theta_at(i_theta);
    double phi_hat = grid.phi_ff_at(i_phi_ff);

    InitResult res;
    double rho_hat = grid.rho_at(0);
    double prev_obj = kInf;
    for (int pass = 0; pass < conv.max_grid_iterations; ++pass) {
        res.iterations = pass + 1;

        // Range stage, near-field model at the current angles.
        ArgMin best_rho;
        for (int i = 0; i < grid.n_rho; ++i) {
            const Vec3 p = ref + spherical_to_cartesian(Spherical(grid.rho_at(i), theta_hat, phi_hat));
            const double val = projection_objective(yy, model.h_static(p), y);
            if (!std::isfinite(val))
                throw NumericalFailure("non-finite range-stage objective");
            if (val < best_rho.value) {
                best_rho.value = val;
                best_rho.index = i;
            }
        }
        rho_hat = grid.rho_at(best_rho.index);
        res.objective_trace.push_back(best_rho.value);

        // Angular stage, near-field model at the selected range. A mirrored
        // elevation index attains a bitwise-equal objective on a planar array;
        // canonicalize to the front half-space. The candidate replaces the
        // incumbent angles only when it scores strictly better: the far-field
        // stage uses a finer elevation grid, so its pick is not always
        // representable here, and keeping the incumbent preserves descent.
        const auto nf_table = tables->near_field(best_rho.index);
        const ArgMin nf = score_table(*nf_table, y, yy);
        int i_phi = nf.index % grid.n_phi;
        int cand_theta = nf.index / grid.n_phi;
        if (2 * i_phi > grid.n_phi - 1)
            i_phi = grid.n_phi - 1 - i_phi;
        const int mirrored = cand_theta * grid.n_phi + i_phi;
        const double cand_val = yy - std::norm(nf_table->h.col(mirrored).dot(y)) / nf_table->norms2[mirrored];
        const Vec3 incumbent = ref + spherical_to_cartesian(Spherical(rho_hat, theta_hat, phi_hat));
        const double incumbent_val = projection_objective(yy, model.h_static(incumbent), y);
        if (cand_val < incumbent_val) {
            theta_hat = grid.theta_at(cand_theta);
            phi_hat = grid.phi_nf_at(i_phi);
        }

        if (std::abs(prev_obj - best_rho.value) <= conv.objective_tolerance) {
            res.converged = true;
            break;
        }
        prev_obj = best_rho.value;
    }

    res.spherical = Spherical(rho_hat, theta_hat, phi_hat);
    res.position = ref + spherical_to_cartesian(res.spherical);
    res.gain = gain_for(model.h_static(res.position), y);
    return res;
}

Vec3 grad_flm(const Vec3 &p, const Vec3 &v, int ell, int m, const RisArray &ris, double ts) {
    if (m < 1 || m > static_cast<int>(ris.element_count()))
        throw ValidationError("grad_flm: element index out of range");
    const Vec3 &pm = ris.elements[static_cast<std::size_t>(m - 1)];
    const Vec3 delta = p - pm;
    const double dm = delta.norm();
    const double dr = (p - ris.reference).norm();
    if (dm == 0.0 || dr == 0.0)
        throw DegenerateGeometry("grad_flm: coincident points");
    const Vec3 um = delta / dm;
    const Vec3 ur = (p - ris.reference) / dr;
    const double t = static_cast<double>(ell) * ts;
    const Vec3 curvature = (v - um * um.dot(v)) / dm; // (I - u u^T) v / d
    return um - ur + curvature * t;
}

LinearizedModel build_linearized_model(const Vec3 &p0, const Vec3 &v, const ChannelModel &model) {
    const int m_count = model.num_elements();
    const int l_count = model.num_pilots();
    const double k = model.wavenumber();
    const double ts = model.symbol_period();
    const Eigen::Vector3d p0v = to_eigen(p0);
    const Eigen::Vector3d vv = to_eigen(v);
    const double dr = model.reference_distance(p0);
    if (dr == 0.0)
        throw DegenerateGeometry("build_linearized_model: anchor at the RIS reference");
    const Eigen::Vector3d ur = (p0v - to_eigen(model.scenario().ris.reference)) / dr;

    Eigen::VectorXcd cur(m_count), rot(m_count);
    Eigen::Matrix3Xd g_static(3, m_count); // u_m - u_r
    Eigen::Matrix3Xd g_mobility(3, m_count); // per-second curvature correction
    for (int m = 0; m < m_count; ++m) {
        const Eigen::Vector3d delta = p0v - model.element_positions().col(m);
        const double dm = delta.norm();
        if (dm == 0.0)
            throw DegenerateGeometry("build_linearized_model: anchor on a RIS element");
        const Eigen::Vector3d um = delta / dm;
        const double base = -k * (dm - dr);
        const double slope = -k * um.dot(vv) * ts;
        rot[m] = std::polar(1.0, slope);
        cur[m] = std::polar(1.0, base) * rot[m];
        g_static.col(m) = um - ur;
        g_mobility.col(m) = (vv - um * um.dot(vv)) / dm * ts;
    }

    LinearizedModel lin;
    lin.anchor = p0;
    lin.velocity = v;
    lin.eta.resize(l_count);
    lin.xi.resize(3, l_count);
    Eigen::VectorXcd wa(m_count);
    for (int l = 0; l < l_count; ++l) {
        wa = model.weights().row(l).transpose().cwiseProduct(cur);
        lin.eta[l] = wa.sum();
        const double t = static_cast<double>(l + 1);
        const Eigen::Vector3d re = g_static * wa.real() + t * (g_mobility * wa.real());
        const Eigen::Vector3d im = g_static * wa.imag() + t * (g_mobility * wa.imag());
        for (int r = 0; r < 3; ++r)
            lin.xi(r, l) = -k * std::complex<double>(re[r], im[r]);
        if (l + 1 < l_count)
            cur.array() *= rot.array();
    }
    return lin;
}

Vec3 pd_hat(const LinearizedModel &lin, std::complex<double> alpha, const Eigen::VectorXcd &y) {
    return from_eigen(solve_residual(lin.eta, lin.xi, alpha, y));
}

std::complex<double> alpha_from_pd(const LinearizedModel &lin, const Vec3 &pd, const Eigen::VectorXcd &y) {
    return gain_step(lin.eta, lin.xi, to_eigen(pd), y);
}

VelocityLinearModel build_velocity_model(const Vec3 &p, const Vec3 &v0, const ChannelModel &model) {
    const int m_count = model.num_elements();
    const int l_count = model.num_pilots();
    const double k = model.wavenumber();
    const double ts = model.symbol_period();
    const Eigen::Vector3d pv = to_eigen(p);
    const Eigen::Vector3d v0v = to_eigen(v0);
    const double dr = model.reference_distance(p);

    Eigen::VectorXcd cur(m_count), rot(m_count);
    Eigen::Matrix3Xd gamma(3, m_count); // -k u_m(p)
    for (int m = 0; m < m_count; ++m) {
        const Eigen::Vector3d delta = pv - model.element_positions().col(m);
        const double dm = delta.norm();
        if (dm == 0.0)
            throw DegenerateGeometry("build_velocity_model: position on a RIS element");
        const Eigen::Vector3d um = delta / dm;
        gamma.col(m) = -k * um;
        const double beta = -k * (dm - dr);
        const double slope = gamma.col(m).dot(v0v) * ts;
        rot[m] = std::polar(1.0, slope);
        cur[m] = std::polar(1.0, beta) * rot[m];
    }

    VelocityLinearModel lin;
    lin.anchor = v0;
    lin.position = p;
    lin.nu.resize(l_count);
    lin.mmat.resize(3, l_count);
    Eigen::VectorXcd wa(m_count);
    for (int l = 0; l < l_count; ++l) {
        wa = model.weights().row(l).transpose().cwiseProduct(cur);
        lin.nu[l] = wa.sum();
        const double t = static_cast<double>(l + 1) * ts;
        const Eigen::Vector3d re = gamma * wa.real();
        const Eigen::Vector3d im = gamma * wa.imag();
        for (int r = 0; r < 3; ++r)
            lin.mmat(r, l) = t * std::complex<double>(re[r], im[r]);
        if (l + 1 < l_count)
            cur.array() *= rot.array();
    }
    return lin;
}

Vec3 vd_hat(const VelocityLinearModel &lin, std::complex<double> alpha, const Eigen::VectorXcd &y) {
    return from_eigen(solve_residual(lin.nu, lin.mmat, alpha, y));
}

std::complex<double> alpha_from_vd(const VelocityLinearModel &lin, const Vec3 &vd, const Eigen::VectorXcd &y) {
    return gain_step(lin.nu, lin.mmat, to_eigen(vd), y);
}

namespace {

// Common alternating loop for both refinement families. `rebuild` re-anchors
// the linearization when per-iteration relinearization is requested. The
// objective-change test is relative to ||y||^2 so the stop rule is independent
// of the absolute gain scale.
template <typename Model, typename Build>
RefineResult alternate_refine(const Eigen::VectorXcd &y, const Vec3 &anchor0, std::complex<double> alpha0,
                              const ConvergenceConfig &conv, Build build,
                              const Eigen::VectorXcd &(*base_of)(const Model &),
                              const Eigen::Matrix3Xcd &(*mat_of)(const Model &)) {
    RefineResult res;
    const double tol = conv.objective_tolerance * y.squaredNorm();
    Vec3 anchor = anchor0;
    Model lin = build(anchor);
    std::complex<double> alpha = alpha0;
    Eigen::Vector3d delta = Eigen::Vector3d::Zero();
    Eigen::Vector3d prev_delta = Eigen::Vector3d::Zero();
    Vec3 prev_anchor = anchor;
    std::complex<double> prev_alpha = alpha0;
    bool have_prev = false;
    double prev_obj = kInf;

    for (int it = 0; it < conv.max_refinement_iterations; ++it) {
        res.iterations = it + 1;
        if (alpha == std::complex<double>(0.0, 0.0)) {
            res.aborted = true;
            if (have_prev) {
                anchor = prev_anchor;
                delta = prev_delta;
                alpha = prev_alpha;
            }
            break;
        }
        delta = solve_residual(base_of(lin), mat_of(lin), alpha, y);
        alpha = gain_step(base_of(lin), mat_of(lin), delta, y);
        const double obj = residual_objective(base_of(lin), mat_of(lin), alpha, delta, y);
        if (!std::isfinite(obj))
            throw NumericalFailure("non-finite refinement objective");
        res.objective_trace.push_back(obj);
        if (std::abs(prev_obj - obj) <= tol) {
            res.converged = true;
            break;
        }
        prev_obj = obj;
        prev_anchor = anchor;
        prev_delta = delta;
        prev_alpha = alpha;
        have_prev = true;
        if (conv.relinearize) {
            anchor = anchor + from_eigen(delta);
            lin = build(anchor);
            delta.setZero();
            prev_anchor = anchor;
            prev_delta.setZero();
        }
    }
    res.estimate = anchor + from_eigen(delta);
    res.gain = alpha;
    return res;
}

const Eigen::VectorXcd &pos_base(const LinearizedModel &m) { return m.eta; }
const Eigen::Matrix3Xcd &pos_mat(const LinearizedModel &m) { return m.xi; }
const Eigen::VectorXcd &vel_base(const VelocityLinearModel &m) { return m.nu; }
const Eigen::Matrix3Xcd &vel_mat(const VelocityLinearModel &m) { return m.mmat; }

} // namespace

RefineResult ref_pos_gain(const Eigen::VectorXcd &y, const Vec3 &v, const Vec3 &p0, std::complex<double> alpha0,
                          const ChannelModel &model, const ConvergenceConfig &conv) {
    return alternate_refine<LinearizedModel>(
        y, p0, alpha0, conv, [&](const Vec3 &anchor) { return build_linearized_model(anchor, v, model); }, pos_base,
        pos_mat);
}

RefineResult ref_vel(const Eigen::VectorXcd &y, const Vec3 &v0, const Vec3 &p, std::complex<double> alpha0,
                     const ChannelModel &model, const ConvergenceConfig &conv) {
    return alternate_refine<VelocityLinearModel>(
        y, v0, alpha0, conv, [&](const Vec3 &anchor) { return build_velocity_model(p, anchor, model); }, vel_base,
        vel_mat);
}

DescentResult gradient_descent_6d(const Vec3 &p_init, const Vec3 &v_init, const Eigen::VectorXcd &y,
                                  const ChannelModel &model, const ConvergenceConfig &conv,
                                  std::optional<double> range_limit) {
    const double yy = y.squaredNorm();
    if (yy == 0.0)
        throw DegenerateModel("gradient_descent_6d: zero observation");

    const Vec3 ref = model.scenario().ris.reference;
    const auto eval = [&](const Vector6d &x) -> double {
        if (!x.allFinite())
            return kInf;
        if (range_limit) {
            const double dx = x[0] - ref.x, dy = x[1] - ref.y, dz = x[2] - ref.z;
            // slack absorbs rounding at grid points sitting exactly on the rim
            if (std::sqrt(dx * dx + dy * dy + dz * dz) > *range_limit * (1.0 + 1e-9))
                return kInf; // outside the search domain
        }
        try {
            return concentrated_objective(model, {x[0], x[1], x[2]}, {x[3], x[4], x[5]}, y) / yy;
        } catch (const Error &) {
            return kInf; // off-model point rejected by the line search
        }
    };

    Vector6d x;
    x << p_init.x, p_init.y, p_init.z, v_init.x, v_init.y, v_init.z;
    double f = eval(x);
    if (!std::isfinite(f))
        throw NumericalFailure("gradient_descent_6d: non-finite objective at the start");

    constexpr double fd_step = 1e-6; // m and m/s
    const auto gradient = [&](const Vector6d &at, Vector6d &grad, Vector6d *diag_curv, double f_at) {
        for (int i = 0; i < 6; ++i) {
            Vector6d e = at;
            e[i] += fd_step;
            const double fp = eval(e);
            e[i] = at[i] - fd_step;
            const double fm = eval(e);
            grad[i] = (fp - fm) / (2.0 * fd_step);
            if (diag_curv)
                (*diag_curv)[i] = (fp - 2.0 * f_at + fm) / (fd_step * fd_step);
        }
    };

    Vector6d grad, curv;
    gradient(x, grad, &curv, f);
    Matrix6d h_inv = Matrix6d::Identity();
    for (int i = 0; i < 6; ++i)
        if (std::isfinite(curv[i]) && curv[i] > 0.0)
            h_inv(i, i) = 1.0 / curv[i];

    DescentResult res;
    res.position = p_init;
    res.velocity = v_init;
    for (int it = 0; it < conv.max_descent_iterations; ++it) {
        res.iterations = it + 1;
        Vector6d dir = -h_inv * grad;
        if (grad.dot(dir) >= 0.0) {
            h_inv.setIdentity();
            dir = -grad;
        }
        double t = 1.0;
        Vector6d xn;
        double fn = kInf;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            xn = x + t * dir;
            fn = eval(xn);
            if (std::isfinite(fn) && fn < f) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            res.converged = true; // no descent left at gradient-noise level
            break;
        }
        Vector6d grad_new;
        gradient(xn, grad_new, nullptr, fn);
        const Vector6d s = xn - x;
        const Vector6d dg = grad_new - grad;
        const double sy = s.dot(dg);
        if (sy > 0.0) {
            const double rho = 1.0 / sy;
            const Matrix6d left = Matrix6d::Identity() - rho * s * dg.transpose();
            h_inv = left * h_inv * left.transpose() + rho * s * s.transpose();
        }
        const double drop = f - fn;
        x = xn;
        f = fn;
        grad = grad_new;
        if (drop <= conv.objective_tolerance || grad.norm() < 1e-10) {
            res.converged = true;
            break;
        }
    }
    res.position = Vec3{x[0], x[1], x[2]};
    res.velocity = Vec3{x[3], x[4], x[5]};
    res.objective = f * yy;
    return res;
}

EstimationResult find_pos_vel(const Eigen::VectorXcd &y, const ChannelModel &model, const GridSpec &grid,
                              const ConvergenceConfig &conv, GridTables *tables) {
    using Clock = std::chrono::steady_clock;
    const auto elapsed = [](Clock::time_point t0) {
        return std::chrono::duration<double>(Clock::now() - t0).count();
    };
    EstimationResult res;

    auto t0 = Clock::now();
    const InitResult init = init_pos_gain(y, model, grid, conv, tables);
    res.grid_estimate = init.spherical;
    res.grid_iterations = init.iterations;
    res.grid_objective_trace = init.objective_trace;
    res.stage_trace.push_back({"grid", init.objective_trace.back(), init.iterations, elapsed(t0)});

    Vec3 p_hat = init.position;
    Vec3 v_hat{};
    std::complex<double> a_hat = init.gain;

    // The grid defines the search domain; a closed-form step that leaves it is
    // a divergence of the linearized model (weak-signal regime), not a better
    // fit, and is rolled back.
    const Vec3 ref = model.scenario().ris.reference;
    const auto in_domain = [&](const Vec3 &p) { return (p - ref).norm() <= grid.rho_max * (1.0 + 1e-9); };

    t0 = Clock::now();
    double prev_obj = kInf;
    double outer_obj = kInf;
    for (int it = 0; it < conv.max_outer_iterations; ++it) {
        res.outer_iterations = it + 1;
        const RefineResult rv = ref_vel(y, v_hat, p_hat, a_hat, model, conv);
        v_hat = rv.estimate;
        a_hat = rv.gain;
        res.ref_vel_iterations_total += rv.iterations;
        res.refinement_aborted = res.refinement_aborted || rv.aborted;

        const RefineResult rp = ref_pos_gain(y, v_hat, p_hat, a_hat, model, conv);
        res.ref_pos_iterations_total += rp.iterations;
        if (in_domain(rp.estimate)) {
            p_hat = rp.estimate;
            a_hat = rp.gain;
            res.refinement_aborted = res.refinement_aborted || rp.aborted;
        } else {
            res.refinement_aborted = true;
        }

        outer_obj = (y - a_hat * model.h_vector(p_hat, v_hat)).squaredNorm();
        if (!std::isfinite(outer_obj))
            throw NumericalFailure("non-finite outer objective");
        res.outer_objective_trace.push_back(outer_obj);
        if (a_hat == std::complex<double>(0.0, 0.0))
            break; // both refinements collapsed; flags already set
        if (std::abs(prev_obj - outer_obj) <= conv.objective_tolerance) {
            res.converged = true;
            break;
        }
        prev_obj = outer_obj;
    }
    res.stage_trace.push_back({"outer", outer_obj, res.outer_iterations, elapsed(t0)});

    t0 = Clock::now();
    const DescentResult gd = gradient_descent_6d(p_hat, v_hat, y, model, conv, grid.rho_max);
    res.descent_iterations = gd.iterations;
    res.stage_trace.push_back({"descent", gd.objective, gd.iterations, elapsed(t0)});

    res.position = gd.position;
    res.velocity = gd.velocity;
    res.gain = alpha_hat(model, res.position, res.velocity, y);
    return res;
}

} // namespace risloc
