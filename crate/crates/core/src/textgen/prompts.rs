//! Few-shot prompt templates for hard negatives, positives and verb-phrase
//! extraction.

/// One few-shot example: an input caption and its listed outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub input: String,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputStyle {
    /// `Outputs:` followed by one `n) sentence` line per output.
    NumberedList,
    /// `Output: ['a', 'b']` on a single line.
    InlineList,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub instruction: String,
    pub exemplars: Vec<Exemplar>,
    pub style: OutputStyle,
}

impl PromptTemplate {
    fn label(&self) -> &'static str {
        match self.style {
            OutputStyle::NumberedList => "Outputs:",
            OutputStyle::InlineList => "Output:",
        }
    }

    /// Instruction, then exemplars (unless disabled), then the input slot.
    pub fn render(&self, caption: &str, with_exemplars: bool) -> String {
        let mut out = String::new();
        out.push_str(&self.instruction);
        out.push('\n');
        if with_exemplars {
            for ex in &self.exemplars {
                out.push_str(&format!("Input: {}\n", ex.input));
                match self.style {
                    OutputStyle::NumberedList => {
                        out.push_str("Outputs:\n");
                        for (i, o) in ex.outputs.iter().enumerate() {
                            out.push_str(&format!("{}) {o}\n", i + 1));
                        }
                    }
                    OutputStyle::InlineList => {
                        let items: Vec<String> = ex.outputs.iter().map(|o| format!("'{o}'")).collect();
                        out.push_str(&format!("Output: [{}]\n", items.join(", ")));
                    }
                }
            }
        }
        out.push_str(&format!("Input: {}\n{}", caption.trim(), self.label()));
        out
    }
}

fn exemplar(input: &str, outputs: &[&str]) -> Exemplar {
    Exemplar {
        input: input.to_string(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

/// Prompt asking for `count` sentences with a different action.
pub fn hard_negative_template(count: usize) -> PromptTemplate {
    PromptTemplate {
        instruction: format!(
            "In this task, you are given an input sentence. Your job is to tell me {count} output sentences with a different meaning by only changing the action verbs."
        ),
        exemplars: vec![
            exemplar(
                "A man walks up to a woman holding an umbrella in a garden.",
                &[
                    "A man jumps up to a woman throwing an umbrella in a garden.",
                    "A man runs up to a woman opening an umbrella in a garden.",
                    "A man walks away from a woman buying an umbrella in a garden.",
                    "A man throws up on a woman carrying an umbrella in a garden.",
                    "A man punches a woman swinging an umbrella in a garden.",
                    "A man sits with a woman wrapping up her umbrella in a garden.",
                    "A man talks to a woman closing an umbrella in a garden.",
                    "A man flirts with a woman playing with an umbrella in a garden.",
                    "A man skips to a woman leaning on her umbrella in a garden.",
                    "A man sprints to a man losing her umbrella in a garden.",
                ],
            ),
            exemplar(
                "Surfers ride the waves in an ocean.",
                &[
                    "Surfers get hit by the waves in an ocean.",
                    "Surfers swimming in the waves in an ocean.",
                    "Surfers meditating by the waves in an ocean.",
                    "Surfers drowning in the waves in an ocean.",
                    "Surfers asking for help in the waves in an ocean.",
                    "Surfers teaming up in the waves in an ocean.",
                    "Surfers snorkeling in the waves in the ocean.",
                    "Surfers taking photos by the waves in the ocean.",
                    "Surfers getting ready to go into the waves in the ocean.",
                    "Surfers stretching by the waves in the ocean.",
                ],
            ),
            exemplar(
                "A dentist holds the replica of a human mouth he shows how important flossing your teeth is.",
                &[
                    "A dentist cleans the replica of a human mouth he presents how unimportant flossing your teeth is.",
                    "A dentist breaks the replica of a human mouth he screams how important flossing your teeth is.",
                    "A dentist fixes the replica of a human mouth he says how important flossing your teeth is.",
                    "A dentist buys the replica of a human mouth he explains how important brushing your teeth is.",
                    "A dentist plays with the replica of a human mouth he remembers about how important washing your teeth is.",
                    "A dentist tidies the replica of a human mouth he rambles on about how important breaking your teeth is.",
                    "A dentist rotates the replica of a human mouth he presents how important fracturing your teeth is.",
                    "A dentist places on his legs the replica of a human mouth he shows how important flossing your teeth is.",
                    "A dentist searches for the replica of a human mouth he shows how important grinding your teeth is.",
                    "A dentist picks up the replica of a human mouth he presents how important whitening your teeth is.",
                ],
            ),
            exemplar(
                "Looks like a band playing on the stage and perhaps Community Center and people gathered around watching.",
                &[
                    "Looks like a band fighting on the stage and perhaps Community Center and people gathered around crying.",
                    "Looks like a band dancing on the stage and perhaps Community Center and people gathered around smiling.",
                    "Looks like a band singing on the stage and perhaps Community Center and people gathered around filming.",
                    "Looks like a band bowing on the stage and perhaps Community Center and people gathered around clapping.",
                    "Looks like a band making a speech on the stage and perhaps Community Center and people gathered around listening.",
                    "Looks like a band laughing on the stage and perhaps Community Center and people gathered around cheering.",
                    "Looks like a band working on the stage and perhaps Community Center and people gathered around standing.",
                    "Looks like a band holding hands on the stage and perhaps Community Center and people gathered around praying.",
                    "Looks like a band jumping on the stage and perhaps Community Center and people gathered around encouraging.",
                    "Looks like a band yelling on the stage and perhaps Community Center and people gathered around watching.",
                ],
            ),
        ],
        style: OutputStyle::NumberedList,
    }
}

/// Prompt asking for `count` sentences with the same meaning.
pub fn positive_template(count: usize) -> PromptTemplate {
    PromptTemplate {
        instruction: format!(
            "In this task, you are given an input sentence. Your job is to tell me {count} output sentences with the same meaning by only changing the action verbs."
        ),
        exemplars: vec![
            exemplar(
                "A man walks up to a woman holding an umbrella in a garden.",
                &[
                    "A man strolls up to a woman holding an umbrella in a garden.",
                    "A man marches up to a woman holding an umbrella in a garden.",
                    "A man strides up to a woman holding an umbrella in a garden.",
                    "A man wanders up to on a woman carrying an umbrella in a garden.",
                    "A man tramps up to a woman holding an umbrella in a garden.",
                    "A man steps up to with a woman holding an umbrella in a garden.",
                    "A man wanders up to a woman holding an umbrella in a garden.",
                    "A man treads up to a woman holding an umbrella in a garden.",
                    "A man truges up to a woman holding an umbrella in a garden.",
                    "A man treaks to a woman holding her umbrella in a garden.",
                ],
            ),
            exemplar(
                "A dentist holds the replica of a human mouth he shows how important flossing your teeth is.",
                &[
                    "A dentist grasps the replica of a human mouth he shows how important flossing your teeth is.",
                    "A dentist carries the replica of a human mouth he shows how important flossing your teeth is.",
                    "A dentist clutches the replica of a human mouth he shows how important flossing your teeth is.",
                    "A dentist grips the replica of a human mouth he shows how important flossing your teeth is.",
                    "A dentist holds the replica of a human mouth he explains how important flossing your teeth is.",
                    "A dentist holds the replica of a human mouth he presents how important flossing your teeth is.",
                    "A dentist holds the replica of a human mouth he demonstrates how important flossing your teeth is.",
                    "A dentist holds the replica of a human mouth he communicates how important flossing your teeth is.",
                    "A dentist holds the replica of a human mouth he displays how important flossing your teeth is.",
                    "A dentist holds the replica of a human mouth he highlights how important flossing your teeth is.",
                ],
            ),
            exemplar(
                "This is a video of somebody touching wood.",
                &[
                    "This is a video of somebody tapping wood.",
                    "This is a video of somebody stroking wood.",
                    "This is a video of somebody pressing wood.",
                    "This is a video of somebody handling wood.",
                    "This is a video of somebody patting wood.",
                    "This is a video of somebody brushing wood.",
                    "This is a video of somebody grazing wood.",
                    "This is a video of somebody poking wood.",
                    "This is a video of somebody caressing wood.",
                    "This is a video of somebody gripping wood.",
                ],
            ),
            exemplar(
                "This is a video of a group of adults outside dancing.",
                &[
                    "This is a video of a group of adults outside whirling.",
                    "This is a video of a group of adults outside twirling.",
                    "This is a video of a group of adults outside swaying.",
                    "This is a video of a group of adults outside partying.",
                    "This is a video of a group of adults outside getting down.",
                    "This is a video of a group of adults outside spinning.",
                    "This is a video of a group of adults outside bouncing.",
                    "This is a video of a group of adults outside bopping.",
                    "This is a video of a group of adults outside waltzing.",
                    "This is a video of a group of adults outside prancing.",
                ],
            ),
        ],
        style: OutputStyle::NumberedList,
    }
}

/// Prompt asking for the caption's action verb phrases as a list.
pub fn extraction_template() -> PromptTemplate {
    let ex = |input: &str, outputs: &[&str]| exemplar(input, outputs);
    PromptTemplate {
        instruction: "In this task, you are given an input sentence. Your job is to output the action verb phrases.".into(),
        exemplars: vec![
            ex("the young girl in the middle of the road she is dancing.", &["dancing"]),
            ex("a city area can be seen that has people in the walkways of runways.", &[]),
            ex(
                "this is a video of a birthday and she has a green colored dress and they are cutting a cake there's a clown on the side and the parents seem to be clap.",
                &["cutting cake", "clapping"],
            ),
            ex(
                "one woman is talking to the camera about being safe he has a shirt with pal pal on it in the greenery behind her.",
                &["talking to camera"],
            ),
            ex("a bicycle with a specialized back wheel slides along a wet paper.", &["sliding"]),
            ex("a person clicking an object that is connected to a speaker.", &["clicking"]),
            ex(
                "it's a video of a football game and one of the blue team is throwing the football really far into the endzone.",
                &["throwing football"],
            ),
            ex("this is a video of someone filing their nails.", &["filing nails"]),
            ex("airplane with the words British Airways can be seen over top.", &[]),
            ex(
                "man sitting standing at the front of the room is giving speech and asking an audience if they've ever heard of a specific song.",
                &["standing", "giving speech", "asking"],
            ),
            ex(
                "it shows a video of a man talking on the phone yeah glasses and has a black phone.",
                &["talking on phone"],
            ),
            ex(
                "hitchhiker is on the side of the road by a truck stop pulling a sign that says North.",
                &["pulling a sign"],
            ),
            ex(
                "this is a video of a man on a ladder the man is cutting down a tree branch the man is wearing red.",
                &["cutting tree"],
            ),
            ex(
                "on an indoor gym on a hard Brown meth there's a man young man with a barbell with lots of heavy weights on each side and he has it over his head stiff arm straight arm going to be and then he drops it on the floor while he does so you can hear the clanking of the weight that they smack against each other.",
                &["dropping"],
            ),
            ex("he is using a large chainsaw to cut inside of a tree branch.", &["cutting tree"]),
            ex("I meant stacking up his cups for cup stacking concentration for a party.", &["stacking cups"]),
            ex("a large field shown with garbage and water flowing through it.", &["water flowing"]),
            ex("a washing machine washes the clothes.", &["washing clothes"]),
        ],
        style: OutputStyle::InlineList,
    }
}
