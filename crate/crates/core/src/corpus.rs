//! A small template grammar of voice-assistant requests, used as synthetic
//! clean text at desk scale.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::seed::rng_from;

const TEMPLATES: &[&str] = &[
    "set a timer for {num} {unit}",
    "set {art} {num} {unit} timer",
    "delete {poss} {timer}",
    "cancel {poss} {num} {unit} timer",
    "how much time is left on {poss} timer",
    "wake me up at {num} {ampm}",
    "set an alarm for {num} {ampm} {day}",
    "turn {onoff} {poss} alarm",
    "play {some} {genre} music",
    "play {song} by {artist}",
    "play the latest album by {artist}",
    "skip this song",
    "turn the volume {updown}",
    "{pause} the music",
    "what is the weather {when}",
    "what is the weather in {city} {when}",
    "will it {rain} in {city} {when}",
    "how hot will it be {when}",
    "call {contact} {onphone}",
    "send a message to {contact} saying {msg}",
    "text {contact} that {msg}",
    "add {item} to {poss} shopping list",
    "remove {item} from {poss} shopping list",
    "what is on {poss} shopping list",
    "remind me to {task} {when}",
    "remind me to {task} at {num} {ampm}",
    "turn {onoff} the {room} lights",
    "dim the {room} lights to {num} percent",
    "set the thermostat to {num} degrees",
    "lock the {door} door",
    "is the {door} door locked",
    "how do you say {word} in {lang}",
    "translate {word} into {lang}",
    "what time is it in {city}",
    "how far is {city} from {city}",
    "tell me a {joke}",
    "what is on {poss} calendar {when}",
    "add {event} to {poss} calendar {when}",
    "order {art} {food} from {shop}",
    "how many calories are in {art} {food}",
    "read me the news about {topic}",
    "what is the score of the {team} game",
    "when do the {team} play {when}",
    "open the {app} app",
    "close the {app} app",
    "find {art} {place} near me",
    "navigate to the nearest {place}",
    "how long will it take to drive to {city}",
];

fn slot(name: &str) -> &'static [&'static str] {
    match name {
        "num" => &[
            "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
            "twelve", "fifteen", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "ninety",
        ],
        "unit" => &["seconds", "minutes", "hours", "second", "minute", "hour"],
        "art" => &["a", "the", "one"],
        "poss" => &["my", "the", "our", "this", "that"],
        "timer" => &["timer", "alarm", "reminder", "timers", "alarms", "reminders"],
        "ampm" => &["am", "pm", "o'clock", "in the morning", "in the evening", "tonight"],
        "day" => &["today", "tomorrow", "on monday", "on friday", "on saturday", "every day", "on weekdays"],
        "onoff" => &["on", "off"],
        "some" => &["some", "relaxing", "loud", "my", "", "upbeat"],
        "genre" => &["jazz", "rock", "classical", "country", "pop", "piano", "dance", "folk"],
        "song" => &["hello", "yesterday", "imagine", "thriller", "halo", "roar", "closer", "faded"],
        "artist" => &["adele", "the beatles", "queen", "drake", "madonna", "coldplay", "shakira", "prince"],
        "updown" => &["up", "down", "up a little", "down a bit", "all the way up"],
        "pause" => &["pause", "stop", "resume", "mute", "unmute"],
        "when" => &["today", "tomorrow", "tonight", "this weekend", "next week", "on monday", "this afternoon", "right now", ""],
        "city" => &["boston", "seattle", "paris", "london", "tokyo", "berlin", "chicago", "denver", "madrid", "toronto"],
        "rain" => &["rain", "snow", "be sunny", "be windy", "be cold"],
        "contact" => &["mom", "dad", "john", "sarah", "the office", "grandma", "alex", "my sister", "my brother"],
        "onphone" => &["", "on speaker", "on video", "on his mobile", "on her mobile", "at home"],
        "msg" => &["i am running late", "i will be home soon", "call me back", "see you tonight", "happy birthday", "dinner is ready"],
        "item" => &["milk", "eggs", "bread", "apples", "coffee", "butter", "paper towels", "rice", "cheese", "bananas"],
        "task" => &["call mom", "take out the trash", "water the plants", "pay the bills", "buy milk", "feed the dog", "check the mail"],
        "room" => &["kitchen", "bedroom", "living room", "bathroom", "office", "garage", "hallway"],
        "door" => &["front", "back", "garage", "side"],
        "word" => &["hello", "thank you", "goodbye", "water", "friend", "beautiful", "coffee"],
        "lang" => &["spanish", "french", "german", "italian", "japanese", "chinese"],
        "joke" => &["joke", "story", "fun fact", "riddle", "funny joke", "bedtime story"],
        "event" => &["lunch with sarah", "a dentist appointment", "a team meeting", "dinner with mom", "a doctor visit"],
        "food" => &["pizza", "burger", "salad", "sandwich", "banana", "coffee", "taco"],
        "shop" => &["the corner shop", "pizza palace", "the cafe", "burger town", "the deli"],
        "topic" => &["sports", "politics", "technology", "science", "business", "the election", "the weather"],
        "team" => &["lakers", "yankees", "patriots", "red sox", "bulls", "giants"],
        "app" => &["camera", "music", "maps", "weather", "calendar", "settings", "photos"],
        "place" => &["gas station", "coffee shop", "pharmacy", "restaurant", "grocery store", "park", "bank"],
        _ => panic!("unknown slot {name}"),
    }
}

fn expand<R: Rng>(template: &str, rng: &mut R) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.extend(rest[..open].split_whitespace());
        let close = open + rest[open..].find('}').expect("closed slot");
        let choice = slot(&rest[open + 1..close]).choose(rng).expect("nonempty slot");
        out.extend(choice.split_whitespace());
        rest = &rest[close + 1..];
    }
    out.extend(rest.split_whitespace());
    out.join(" ")
}

/// Generates `n` sentences, deterministic per seed.
pub fn generate_sentences(n: usize, seed: u64) -> Vec<String> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| {
            let t = TEMPLATES.choose(&mut rng).expect("templates");
            expand(t, &mut rng)
        })
        .collect()
}
