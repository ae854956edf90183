// Stand-in sidecar speaking the line-delimited JSON surrogate protocol.
//
//   mock-sidecar [--mode echo|gp|malformed|timeout|exit|short|nonmonotone|badid]
//                [--fault-op fit|predict] [--fault-after N]
//
// echo answers every predict with mean 0 and variance 1; gp fits a local
// Gaussian process. The remaining modes behave like echo until the
// (N+1)-th request of the fault op, which is then answered incorrectly.

#include "firemf/gp.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <iostream>
#include <string>
#include <thread>

using nlohmann::json;

namespace {

struct State {
  std::string mode = "echo";
  std::string fault_op = "predict";
  int fault_after = 0;
  int seen_fault_op = 0;
  bool fitted = false;
  std::unique_ptr<firemf::GaussianProcess> gp;
};

void emit(const json& j) {
  std::cout << j.dump() << '\n' << std::flush;
}

json error_response(const json& id, const std::string& message) {
  return {{"id", id}, {"ok", false}, {"error", message}};
}

firemf::Matrix to_matrix(const json& rows) {
  const auto n = static_cast<firemf::Index>(rows.size());
  const auto d = n > 0 ? static_cast<firemf::Index>(rows[0].size()) : 0;
  firemf::Matrix X(n, d);
  for (firemf::Index i = 0; i < n; ++i) {
    if (static_cast<firemf::Index>(rows[static_cast<std::size_t>(i)].size()) != d)
      throw std::runtime_error("ragged x");
    for (firemf::Index j = 0; j < d; ++j) X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
  }
  return X;
}

json predict_response(State& st, const json& id, const json& req) {
  const firemf::Matrix X = to_matrix(req.at("x"));
  std::vector<double> lv = req.value("quantiles", std::vector<double>{});
  const firemf::QuantileLevels levels(lv);
  firemf::PredictiveSummary s;
  if (st.mode == "gp") {
    s = st.gp->predict(X, levels);
  } else {
    s.mean = firemf::Vector::Zero(X.rows());
    s.variance = firemf::Vector::Ones(X.rows());
    s.quantiles = firemf::gaussian_quantiles(s.mean, s.variance, levels);
  }
  json out{{"id", id}, {"ok", true}};
  out["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
  out["variance"] = std::vector<double>(s.variance.data(), s.variance.data() + s.variance.size());
  json q = json::array();
  for (firemf::Index i = 0; i < s.quantiles.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(s.quantiles.cols()));
    for (firemf::Index j = 0; j < s.quantiles.cols(); ++j) row[static_cast<std::size_t>(j)] = s.quantiles(i, j);
    q.push_back(row);
  }
  out["quantiles"] = q;
  return out;
}

void inject_fault(State& st, const json& id, json& normal) {
  if (st.mode == "malformed") {
    std::cout << "{\"id\": " << id.dump() << ", \"ok\": tru" << '\n' << std::flush;
  } else if (st.mode == "timeout") {
    std::this_thread::sleep_for(std::chrono::hours(1));
  } else if (st.mode == "exit") {
    std::exit(3);
  } else if (st.mode == "short") {
    if (normal.contains("mean") && !normal["mean"].empty()) {
      normal["mean"].erase(normal["mean"].size() - 1);
      normal["variance"].erase(normal["variance"].size() - 1);
      normal["quantiles"].erase(normal["quantiles"].size() - 1);
    }
    emit(normal);
  } else if (st.mode == "nonmonotone") {
    if (normal.contains("quantiles"))
      for (auto& row : normal["quantiles"]) std::reverse(row.begin(), row.end());
    if (normal.contains("variance") && !normal["variance"].empty()) normal["variance"][0] = -0.5;
    emit(normal);
  } else if (st.mode == "badid") {
    normal["id"] = id.is_number_integer() ? json(id.get<long long>() + 1000) : json(-1);
    emit(normal);
  } else {
    emit(normal);
  }
}

}  // namespace

int main(int argc, char** argv) {
  State st;
  CLI::App app{"Mock surrogate sidecar"};
  app.add_option("--mode", st.mode)
      ->check(CLI::IsMember({"echo", "gp", "malformed", "timeout", "exit", "short", "nonmonotone", "badid"}));
  app.add_option("--fault-op", st.fault_op)->check(CLI::IsMember({"fit", "predict"}));
  app.add_option("--fault-after", st.fault_after)->check(CLI::NonNegativeNumber);
  CLI11_PARSE(app, argc, argv);
  firemf::Warnings::instance().set_quiet(true);

  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    json req;
    try {
      req = json::parse(line);
    } catch (const json::exception& e) {
      emit(error_response(nullptr, std::string("malformed request: ") + e.what()));
      continue;
    }
    const json id = req.contains("id") ? req["id"] : json(nullptr);
    const std::string op = req.value("op", "");
    json response;
    try {
      if (op == "shutdown") {
        emit({{"id", id}, {"ok", true}});
        return 0;
      } else if (op == "fit") {
        const firemf::Matrix X = to_matrix(req.at("x"));
        const auto y_raw = req.at("y").get<std::vector<double>>();
        if (static_cast<firemf::Index>(y_raw.size()) != X.rows()) throw std::runtime_error("len(y) != rows(x)");
        if (st.mode == "gp") {
          st.gp = std::make_unique<firemf::GaussianProcess>();
          st.gp->fit(X, Eigen::Map<const firemf::Vector>(y_raw.data(), static_cast<firemf::Index>(y_raw.size())));
        }
        st.fitted = true;
        response = {{"id", id}, {"ok", true}};
      } else if (op == "predict") {
        if (!st.fitted) {
          emit(error_response(id, "predict before fit"));
          continue;
        }
        response = predict_response(st, id, req);
      } else {
        emit(error_response(id, "unknown op '" + op + "'"));
        continue;
      }
    } catch (const std::exception& e) {
      emit(error_response(id, std::string(op) + " failed: " + e.what()));
      continue;
    }

    const bool faulty_mode = st.mode != "echo" && st.mode != "gp";
    if (faulty_mode && op == st.fault_op && st.seen_fault_op++ >= st.fault_after) {
      inject_fault(st, id, response);
    } else {
      emit(response);
    }
  }
  return 0;
}
