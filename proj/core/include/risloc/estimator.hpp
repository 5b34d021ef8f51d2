// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#pragma once

#include <complex>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "risloc/channel.hpp"

namespace risloc {

/// Search-grid geometry. Azimuth spans [0, 2pi) endpoint-exclusive; elevation
/// spans [0, pi/2] (far-field stage) or [0, pi] (near-field stage) inclusive;
/// range spans (0, rho_max] as rho_max*(i+1)/n_rho. 2D linear index is
/// theta-major: k = i_theta * n_phi + i_phi.
struct GridSpec {
    int n_theta = 180;
    int n_phi = 90;
    int n_rho = 200;
    double rho_max = 12.0;

    void validate() const;
    double theta_at(int i) const;
    double phi_ff_at(int i) const;
    double phi_nf_at(int i) const;
    double rho_at(int i) const;
};

/// Loop-termination policy. Alternating loops stop on an absolute objective
/// change below `objective_tolerance`; the 6D descent works on the
/// ||y||^2-normalized objective so the same threshold is scale-free there.
struct ConvergenceConfig {
    double objective_tolerance = 1e-15;
    int max_grid_iterations = 20;
    int max_refinement_iterations = 100;
    int max_outer_iterations = 50;
    int max_descent_iterations = 500;
    bool relinearize = false; // rebuild the refinement linearization every inner iteration
};

/// First-order expansion of h around a position anchor:
/// h(p0 + pd, v) ≈ eta + j * xi^T * pd.
struct LinearizedModel {
    Eigen::VectorXcd eta;    // L
    Eigen::Matrix3Xcd xi;    // 3 x L
    Vec3 anchor;             // p0
    Vec3 velocity;           // fixed v
};

/// Small-angle expansion of h around a velocity anchor:
/// h(p, v0 + vd) ≈ nu + j * mmat^T * vd.
struct VelocityLinearModel {
    Eigen::VectorXcd nu;     // L
    Eigen::Matrix3Xcd mmat;  // 3 x L
    Vec3 anchor;             // v0
    Vec3 position;           // fixed p
};

struct InitResult {
    Vec3 position;
    std::complex<double> gain;
    Spherical spherical;
    int iterations = 0;
    std::vector<double> objective_trace; // range-stage objective per loop pass
    bool converged = false;
};

struct RefineResult {
    Vec3 estimate; // refined position or velocity
    std::complex<double> gain;
    int iterations = 0;
    std::vector<double> objective_trace;
    bool converged = false;
    bool aborted = false; // gain collapsed to zero; previous iterate returned
};

struct DescentResult {
    Vec3 position;
    Vec3 velocity;
    int iterations = 0;
    double objective = 0.0; // final raw concentrated objective
    bool converged = false;
};

struct StageRecord {
    std::string stage;
    double objective = 0.0;
    int iterations = 0;
    double seconds = 0.0;
};

struct EstimationResult {
    Vec3 position;
    Vec3 velocity;
    std::complex<double> gain;
    Spherical grid_estimate;
    std::vector<StageRecord> stage_trace;
    std::vector<double> grid_objective_trace;
    std::vector<double> outer_objective_trace;
    int grid_iterations = 0;
    int outer_iterations = 0;
    int descent_iterations = 0;
    int ref_pos_iterations_total = 0;
    int ref_vel_iterations_total = 0;
    bool converged = false;
    bool refinement_aborted = false;
};

/// Matched-filter banks over the search grids, shared across trials of a sweep
/// point. The channel rows depend only on geometry, profile and grid — never
/// on the observation — so one table serves every trial and thread. Entries
/// are built once behind a future and evicted LRU beyond the capacity.
class GridTables {
  public:
    GridTables(const ChannelModel &model, const GridSpec &grid, std::size_t capacity = 64);

    struct Table {
        Eigen::MatrixXcd h;      // L x K channel bank
        Eigen::VectorXd norms2;  // per-column squared norms
    };

    std::shared_ptr<const Table> far_field();
    std::shared_ptr<const Table> near_field(int rho_index);
    const GridSpec &grid() const { return grid_; }

  private:
    std::shared_ptr<const Table> build_far_field() const;
    std::shared_ptr<const Table> build_near_field(int rho_index) const;

    ChannelModel model_; // owned copy; tables only read weights and geometry
    GridSpec grid_;
    std::size_t capacity_;
    std::mutex mutex_;
    std::shared_future<std::shared_ptr<const Table>> ff_;
    std::promise<std::shared_ptr<const Table>> ff_promise_;
    bool ff_started_ = false;
    std::unordered_map<int, std::shared_future<std::shared_ptr<const Table>>> nf_;
    std::list<int> nf_order_; // most recent at the front
};

/// Closed-form gain for fixed (p, v): h^H y / ||h||^2.
std::complex<double> alpha_hat(const ChannelModel &model, const Vec3 &p, const Vec3 &v, const Eigen::VectorXcd &y);

/// Concentrated ML cost ||y - alpha_hat h||^2 (the null-space projection of y
/// onto h, computed in the cancellation-free two-step form).
double concentrated_objective(const ChannelModel &model, const Vec3 &p, const Vec3 &v, const Eigen::VectorXcd &y);

enum class SteeringKind { FarField, NearField };

/// Static (v = 0) concentrated cost under the chosen steering model; the
/// near-field form needs a range.
double static_objective(const ChannelModel &model, double theta, double phi, std::optional<double> rho,
                        const Eigen::VectorXcd &y, SteeringKind kind);

/// Coarse position and gain from the far-field 2D search followed by the
/// alternating range / near-field-angle grid loop. A planar array cannot
/// separate mirror images across its plane, so the angular pick is
/// canonicalized to the front half-space (equal objective by symmetry).
InitResult init_pos_gain(const Eigen::VectorXcd &y, const ChannelModel &model, const GridSpec &grid,
                         const ConvergenceConfig &conv, GridTables *tables = nullptr);

/// Gradient of flm_approx with respect to p.
Vec3 grad_flm(const Vec3 &p, const Vec3 &v, int ell, int m, const RisArray &ris, double ts);

LinearizedModel build_linearized_model(const Vec3 &p0, const Vec3 &v, const ChannelModel &model);

/// Exact minimizer of ||y - alpha (eta + j xi^T pd)||^2 over real pd.
Vec3 pd_hat(const LinearizedModel &lin, std::complex<double> alpha, const Eigen::VectorXcd &y);

std::complex<double> alpha_from_pd(const LinearizedModel &lin, const Vec3 &pd, const Eigen::VectorXcd &y);

/// Alternating closed-form position/gain refinement around p0 with fixed v.
/// The linearization is built once up front (low-complexity variant) unless
/// conv.relinearize is set.
RefineResult ref_pos_gain(const Eigen::VectorXcd &y, const Vec3 &v, const Vec3 &p0, std::complex<double> alpha0,
                          const ChannelModel &model, const ConvergenceConfig &conv);

VelocityLinearModel build_velocity_model(const Vec3 &p, const Vec3 &v0, const ChannelModel &model);

/// Exact minimizer of ||y - alpha (nu + j mmat^T vd)||^2 over real vd.
Vec3 vd_hat(const VelocityLinearModel &lin, std::complex<double> alpha, const Eigen::VectorXcd &y);

std::complex<double> alpha_from_vd(const VelocityLinearModel &lin, const Vec3 &vd, const Eigen::VectorXcd &y);

/// Alternating closed-form velocity/gain refinement around v0 with fixed p.
RefineResult ref_vel(const Eigen::VectorXcd &y, const Vec3 &v0, const Vec3 &p, std::complex<double> alpha0,
                     const ChannelModel &model, const ConvergenceConfig &conv);

/// Quasi-Newton (BFGS, central-difference gradients, backtracking line search)
/// local minimization of the normalized concentrated cost over (p, v). When a
/// range limit is given, positions outside that ball around the array
/// reference are treated as infeasible by the line search.
DescentResult gradient_descent_6d(const Vec3 &p_init, const Vec3 &v_init, const Eigen::VectorXcd &y,
                                  const ChannelModel &model, const ConvergenceConfig &conv,
                                  std::optional<double> range_limit = std::nullopt);

/// Full pipeline: grid initialization, alternating velocity/position
/// refinement, 6D descent, final gain update.
EstimationResult find_pos_vel(const Eigen::VectorXcd &y, const ChannelModel &model, const GridSpec &grid,
                              const ConvergenceConfig &conv, GridTables *tables = nullptr);

} // namespace risloc
