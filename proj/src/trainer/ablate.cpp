#include "fctf/ablate.hpp"

#include <chrono>
#include <sstream>

#include "fctf/error.hpp"

namespace fctf::ablate {

std::vector<AblationRow> run_matrix(const train::TrainConfig& base, const data::Dataset& ds, const aux::AuxNets& aux,
                                    const AblationOptions& opt, const std::filesystem::path& out_dir) {
  require(opt.steps >= 1, "ablate: steps must be >= 1");
  require(!opt.temporal.empty() && !opt.discriminator.empty() && !opt.ortho.empty(), "ablate: empty toggle list");
  const auto test_ids = ds.identities_in(synth::Split::Test);
  if (test_ids.empty()) throw PreconditionError("ablate: the test split is empty");
  std::vector<AblationRow> rows;
  for (const auto t : opt.temporal)
    for (const auto d : opt.discriminator)
      for (const auto o : opt.ortho) {
        train::TrainConfig c = base;
        c.steps = opt.steps;
        c.checkpoint_every = opt.steps;
        c.temporal_fusion = t;
        c.discriminator = d;
        c.ortho_mode = o;
        const auto name = nets::to_string(t) + "_" + nets::to_string(d) + "_" + loss::to_string(o);
        train::TrainOptions to;
        to.out_dir = out_dir / name;
        AblationRow row;
        row.temporal = t;
        row.discriminator = d;
        row.ortho = o;
        to.on_step = [&row](std::int64_t, const loss::LossBreakdown& b) { row.final_losses = b; };
        const auto t0 = std::chrono::steady_clock::now();
        auto st = train::train(c, ds, aux, to);
        metrics::EvalOptions eo;
        eo.max_clips = opt.eval_clips;
        row.report = metrics::evaluate(*st, ds, eo);
        row.grid_ratio = train::canonical_grid(*st, ds, test_ids, opt.grid_frames).ratio();
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        row.steps = opt.steps;
        rows.push_back(row);
      }
  return rows;
}

std::string to_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream o;
  o.precision(6);
  o << kCsvHeader << '\n';
  for (const auto& r : rows)
    o << nets::to_string(r.temporal) << ',' << nets::to_string(r.discriminator) << ',' << loss::to_string(r.ortho) << ','
      << r.steps << ',' << r.final_losses.rec << ',' << r.final_losses.total << ',' << r.report.ssim << ','
      << r.report.ms_ssim << ',' << r.report.psnr << ',' << r.report.lmd << ',' << r.report.lse_c << ',' << r.grid_ratio
      << ',' << r.seconds << '\n';
  return o.str();
}

}  // namespace fctf::ablate
