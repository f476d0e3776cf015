#pragma once

#include "sparsecrf/alphabet.hpp"
#include "sparsecrf/common.hpp"
#include "sparsecrf/corpus.hpp"
#include "sparsecrf/evaluation.hpp"
#include "sparsecrf/features.hpp"
#include "sparsecrf/hmm.hpp"
#include "sparsecrf/inference.hpp"
#include "sparsecrf/model.hpp"
#include "sparsecrf/objective.hpp"
#include "sparsecrf/optimizer.hpp"
#include "sparsecrf/parallel.hpp"
#include "sparsecrf/parameter_store.hpp"
#include "sparsecrf/templates.hpp"
