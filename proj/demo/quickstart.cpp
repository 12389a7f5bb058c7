// Generate a small synthetic cohort, train soft-loss intervals for the whole
// population and print the quality table.

#include "nnpi/nnpi.hpp"

#include <iostream>

int main() {
  nnpi::SynthConfig data;
  data.n = 600;
  data.d = 2;
  data.subjects = 6;
  data.clusters = 1;
  data.noise = {nnpi::NoiseKind::heteroscedastic, 0.02, 1.0};
  data.seed = 11;
  const auto ds = nnpi::synth_generate(data);

  nnpi::ScenarioConfig cfg;
  cfg.folds = 5;
  cfg.gd.max_epochs = 100;
  cfg.seed = 3;
  cfg.jobs = 4;
  const auto report = nnpi::run_generalized(ds, cfg, {0.5, 0.85, 0.95});
  nnpi::write_quality_table(std::cout, report);
}
