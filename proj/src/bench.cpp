#include "nartsp/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <new>

#include "nartsp/evaluate.hpp"

namespace nartsp {

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string num(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace

std::vector<BenchRow> run_bench(Model<float>& model, const BenchOptions& opt) {
    using clock = std::chrono::steady_clock;
    if (opt.count == 0 || opt.repeats == 0) throw ConfigError("bench count and repeats must be positive");
    std::vector<BenchRow> rows;
    for (std::size_t n : opt.sizes) {
        const auto insts = generate_uniform_batch(n, opt.count, opt.seed + n);
        std::vector<DistanceMatrix> dms;
        for (const auto& inst : insts) dms.push_back(distance_matrix(inst));
        for (std::size_t width : opt.beam_widths) {
            SolveOptions so;
            so.policy = width > 1 ? Policy::beam : Policy::greedy;
            so.beam = {width, opt.final_rule};
            for (std::size_t batch : opt.batch_sizes) {
                BenchRow row;
                row.n = n;
                row.beam_width = width;
                row.batch = batch;
                row.count = opt.count;
                try {
                    std::vector<double> s_times, t_times;
                    for (std::size_t r = 0; r < opt.repeats; ++r) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < insts.size(); ++i) {
                            const auto t0 = clock::now();
                            const auto out = model.infer(make_batch(std::span(insts).subspan(i, 1), model.config()));
                            (void)decode_output(out[0], dms[i], so);
                            s += std::chrono::duration<double>(clock::now() - t0).count();
                        }
                        s_times.push_back(s / static_cast<double>(insts.size()));
                        const auto t0 = clock::now();
                        const auto outs = infer_all(model, std::span<const TspInstance>(insts), batch);
                        for (std::size_t i = 0; i < insts.size(); ++i) (void)decode_output(outs[i], dms[i], so);
                        t_times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
                    }
                    row.mean_s_time = median(s_times);
                    row.total_t_time = median(t_times);
                } catch (const std::bad_alloc&) {
                    row.status = "skipped: out of memory";
                }
                rows.push_back(row);
            }
        }
    }
    return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string out = "n,B,batch,mean_s_time,total_t_time,count,status\n";
    for (const auto& r : rows) {
        out += std::to_string(r.n) + "," + std::to_string(r.beam_width) + "," + std::to_string(r.batch) + "," +
               num(r.mean_s_time) + "," + num(r.total_t_time) + "," + std::to_string(r.count) + "," + r.status + "\n";
    }
    return out;
}

}  // namespace nartsp
