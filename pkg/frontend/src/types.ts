export type Condition = "reading" | "teacher_qa" | "llm_qa" | "ruffle_riley";
export type Phase = "active" | "awaiting_revision" | "posttest" | "survey" | "done";
export type Author = "learner" | "ruffle" | "riley" | "system";

export interface ChatMessage {
  turn_id: number;
  author: Author;
  content: string;
  cause: string;
  timestamp: number;
}

export interface QuestionView {
  question_id: string;
  question_text: string;
  index: number;
  total: number;
}

export interface PosttestItemView {
  item_id: string;
  stem: string;
  options: string[];
}

export interface SurveyItemView {
  key: string;
  prompt: string;
}

export interface SurveyView {
  aspects: SurveyItemView[];
  attention_checks: SurveyItemView[];
  lookup: SurveyItemView;
  scale: { min: number; max: number };
}

export interface SessionView {
  session_id: string;
  participant_id: string;
  condition: Condition;
  phase: Phase;
  current_question: QuestionView | null;
  transcript: ChatMessage[];
  help_request_count: number;
  scroll_count: number;
  posttest?: { items: PosttestItemView[] };
  survey?: SurveyView;
}

export interface LessonSection {
  heading: string;
  anchor: string;
}

export interface LessonDoc {
  version: string;
  lesson_id: string;
  title: string;
  body: string;
  sections: LessonSection[];
}

export type StreamFrame =
  | { type: "message"; message: ChatMessage }
  | { type: "phase"; phase: Phase };
