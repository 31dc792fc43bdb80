#pragma once
// Finite-volume solver for the mean-measure density of 1-D size-structured
// models: d/dt n = -(b n)' - r n + division source, first-order upwind with
// pure outflow at x_max. The dual (test-function) side of the same operator
// drives the numeric eigenpair search and the variance-bracket integrand.

#include <functional>
#include <span>
#include <vector>

#include "branchsim/model.hpp"

namespace branchsim {

struct Grid {
    double x_max = 20.0;
    int n_cells = 512;
    double dx() const { return x_max / n_cells; }
    double center(int i) const { return (i + 0.5) * dx(); }
    double edge(int i) const { return i * dx(); }
};

struct GridDensity {
    double t = 0.0;
    std::vector<double> cells;
    double clipped_mass = 0.0; // cumulative negative mass removed
};

double grid_mass(const Grid& g, const GridDensity& n);
double grid_moment(const Grid& g, const GridDensity& n, const std::function<double(double)>& f);

GridDensity pde_init(const Grid& g, const std::function<double(double)>& density,
                     double total_mass = 1.0);
// Point mass split linearly over the two cells around x0 (first moment exact).
GridDensity pde_init_point(const Grid& g, double x0, double mass = 1.0);

// Discretized transport + division operator for one (model, grid) pair.
// Forward side evolves densities; dual side evolves test functions under the
// mean generator (upwind on the opposite stencil).
class PdeOperator {
  public:
    PdeOperator(const ModelSpec& m, const Grid& g);

    const Grid& grid() const { return grid_; }
    // largest stable explicit step for the density solve
    double cfl_dt() const;
    // largest stable explicit step for the dual solve
    double dual_dt() const;

    void step(GridDensity& n, double dt) const;
    void dual_step(std::vector<double>& f, double dt) const;
    // mean generator applied to grid function f (dual stencil, no time step)
    std::vector<double> apply_dual(const std::vector<double>& f) const;
    // linear interpolation of a grid function with linear extrapolation
    double interp(const std::vector<double>& f, double x) const;

  private:
    Grid grid_;
    std::vector<double> rate_;                      // r at centers
    std::vector<double> drift_edge_;                // b at cell edges (n+1)
    std::vector<double> drift_center_;              // b at centers
    std::vector<std::vector<std::pair<int, double>>> deposit_; // donor -> (cell, mass wt)
    std::vector<std::vector<std::pair<double, double>>> child_eval_; // cell -> (pos, wt)
};

void pde_step(const ModelSpec& m, const Grid& g, GridDensity& n, double dt);

struct PdeTrajectory {
    Grid grid;
    std::vector<GridDensity> snapshots; // one per requested time
};
PdeTrajectory pde_solve(const ModelSpec& m, const Grid& g, GridDensity init,
                        std::span<const double> times, double dt);

// Mean-semigroup action on a test function: values[i][.] = (m_{times[i]} f) on
// the grid, computed on the dual side.
struct DualTrajectory {
    Grid grid;
    std::vector<double> times;
    std::vector<std::vector<double>> values;
};
DualTrajectory dual_solve(const ModelSpec& m, const Grid& g,
                          const std::function<double(double)>& f, std::span<const double> times,
                          double dt = 0.0);

struct NumericEigen {
    Grid grid;
    std::vector<double> V; // normalized so the first cell is 1
    double lambda0 = 0.0;
    double residual = 0.0; // sup over interior cells of |GV - lambda V|/max(1,V)
    int iterations = 0;
};
NumericEigen pde_power_iteration(const ModelSpec& m, const Grid& g, double tol = 1e-10,
                                 int max_iters = 200000);
EigenPair eigenpair_from_numeric(const NumericEigen& ne);

// Division kernel of asymmetric mitosis in density form, b(x,y) = (2/y) r(y) g(x/y).
double frag_kernel(const ModelSpec& m, double x, double y);

} // namespace branchsim
