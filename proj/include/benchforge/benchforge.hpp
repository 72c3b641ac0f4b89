#pragma once

#include "benchforge/augment.hpp"
#include "benchforge/bloom.hpp"
#include "benchforge/concept_map.hpp"
#include "benchforge/corpus.hpp"
#include "benchforge/evalkit.hpp"
#include "benchforge/gateway.hpp"
#include "benchforge/pipeline.hpp"
#include "benchforge/retrieval.hpp"
#include "benchforge/templates.hpp"
#include "benchforge/types.hpp"
