#pragma once

#include "utopia/benchmark.hpp"
#include "utopia/checkpoint.hpp"
#include "utopia/dataset.hpp"
#include "utopia/decoupler.hpp"
#include "utopia/defenses.hpp"
#include "utopia/errors.hpp"
#include "utopia/eval.hpp"
#include "utopia/linalg.hpp"
#include "utopia/model.hpp"
#include "utopia/perturbation.hpp"
#include "utopia/poisoner.hpp"
#include "utopia/rng.hpp"
#include "utopia/scaler.hpp"
#include "utopia/schema.hpp"
#include "utopia/theory.hpp"
#include "utopia/train.hpp"
