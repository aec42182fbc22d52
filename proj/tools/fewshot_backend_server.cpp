// Serves the toy backend over the JSON-lines adapter protocol on
// stdin/stdout, for use as `external:<path to this binary>`.

#include <iostream>

#include "fewshot/external_backend.hpp"
#include "fewshot/toy_backend.hpp"

int main() {
  std::ios::sync_with_stdio(false);
  fewshot::ToyBackend backend;
  fewshot::serve_backend(backend, std::cin, std::cout);
  return 0;
}
