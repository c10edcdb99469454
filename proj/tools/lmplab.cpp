#include <Eigen/Core>

#include "lmplab/cli.hpp"

int main(int argc, char** argv) {
  Eigen::setNbThreads(1);  // worker parallelism is managed per batch
  return lmplab::run_cli(argc, argv);
}
