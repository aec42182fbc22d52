#pragma once

#include "fewshot/backend.hpp"
#include "fewshot/classifier_ops.hpp"
#include "fewshot/core_data.hpp"
#include "fewshot/csv.hpp"
#include "fewshot/dataset_io.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/external_backend.hpp"
#include "fewshot/finetune.hpp"
#include "fewshot/harness.hpp"
#include "fewshot/ingestion.hpp"
#include "fewshot/log.hpp"
#include "fewshot/metrics.hpp"
#include "fewshot/mock_bugzilla.hpp"
#include "fewshot/numeric.hpp"
#include "fewshot/pet.hpp"
#include "fewshot/prompting.hpp"
#include "fewshot/random.hpp"
#include "fewshot/setfit.hpp"
#include "fewshot/synthetic.hpp"
#include "fewshot/text.hpp"
#include "fewshot/toy_backend.hpp"
